//! Throughput probe for the training hot path; not part of the build.

use std::time::Instant;

use latflow_core::linalg::{matmul_nn, matmul_nt, matmul_tn, Mat};
use latflow_core::nn::{batch_backward, batch_forward_trace, NetParams, NetSpec};
use latflow_core::rng::{normal_vec, stream};

fn fill(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut r = stream(seed, 0x0b, 0);
    Mat::from_vec(rows, cols, normal_vec(&mut r, rows * cols))
}

fn main() {
    // Raw GEMM throughput at the three shapes training uses.
    for (m, k, n, tag) in [
        (128usize, 600usize, 256usize, "enc-l1"),
        (128, 256, 256, "mid"),
        (128, 2400, 256, "ext-l1"),
    ] {
        let a = fill(m, k, 1);
        let b = fill(n, k, 2);
        let t = Instant::now();
        let reps = 50;
        for _ in 0..reps {
            std::hint::black_box(matmul_nt(&a, &b));
        }
        let s = t.elapsed().as_secs_f64();
        let gmac = (m * k * n * reps) as f64 / s / 1e9;
        println!("matmul_nt {tag:8} {:6.2} GMAC/s", gmac);

        let bt = fill(k, n, 3);
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(matmul_nn(&a, &bt));
        }
        let s = t.elapsed().as_secs_f64();
        println!("matmul_nn {tag:8} {:6.2} GMAC/s", (m * k * n * reps) as f64 / s / 1e9);

        let at = fill(k, m, 4);
        let bb = fill(k, n, 5);
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(matmul_tn(&at, &bb));
        }
        let s = t.elapsed().as_secs_f64();
        println!("matmul_tn {tag:8} {:6.2} GMAC/s", (m * k * n * reps) as f64 / s / 1e9);
    }

    // Full forward+backward through the local-VAE-shaped composite.
    let spec = NetSpec::new(vec![600, 256, 256, 64]).unwrap();
    let net = NetParams::init(spec, 7);
    let x = fill(128, 600, 8);
    let t = Instant::now();
    let reps = 100;
    for _ in 0..reps {
        let (y, trace) = batch_forward_trace(&net, &x).unwrap();
        let mut cot = y;
        for v in cot.data.iter_mut() {
            *v *= 2.0;
        }
        std::hint::black_box(batch_backward(&net, &trace, &cot).unwrap());
    }
    let s = t.elapsed().as_secs_f64();
    let params: u64 = 600 * 256 + 256 * 256 + 256 * 64 + 256 + 256 + 64;
    let gmac = (params * 128 * 3 * reps as u64) as f64 / s / 1e9;
    println!("fwd+bwd enc-shape  {:6.2} GMAC/s  ({:.1} ms/batch)", gmac, s / reps as f64 * 1e3);
}
