//! Single-sample inference timing: median over a fixed number of warm
//! runs, strictly sequential on one thread. The measurement cycles
//! through real dataset samples so cache behavior matches evaluation.

use std::time::Instant;

use anyhow::{ensure, Result};
use latflow_core::predict::LatentPredictor;
use latflow_core::rng::{self, streams};
use latflow_core::world::LatentPairSample;

const WARMUP_RUNS: usize = 32;

pub fn median_predict_ms(
    predictor: &dyn LatentPredictor,
    samples: &[LatentPairSample],
    runs: usize,
    seed: u64,
) -> Result<f64> {
    ensure!(!samples.is_empty(), "timing needs at least one sample");
    ensure!(runs >= 1, "timing needs at least one run");
    for i in 0..WARMUP_RUNS {
        let s = &samples[i % samples.len()];
        predictor.predict(&s.z_local, &s.condition, rng::mix(seed, streams::SAMPLER, i as u64))?;
    }
    let mut times = Vec::with_capacity(runs);
    for i in 0..runs {
        let s = &samples[i % samples.len()];
        let key = rng::mix(seed, streams::SAMPLER, (WARMUP_RUNS + i) as u64);
        let start = Instant::now();
        let out = predictor.predict(&s.z_local, &s.condition, key)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}
