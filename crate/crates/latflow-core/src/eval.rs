//! Latent-space evaluation: cosine similarity between predicted and
//! ground-truth extended latents, aggregated per dataset split.

use alloc::vec::Vec;
use thiserror::Error;

use crate::predict::{LatentPredictor, PredictError};
use crate::rng::{self, streams};
use crate::world::Dataset;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vector lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("cosine of a zero vector is undefined")]
    ZeroNorm,
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// dot(a,b) / (|a||b|), clamped to [-1, 1] against rounding. Errors on
/// zero vectors rather than returning NaN.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroNorm);
    }
    #[allow(unused_imports)]
    use num_traits::Float;
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation of the per-sample cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Runs the predictor over every sample of one split and scores each
/// prediction against the stored extended latent. The per-sample key
/// is derived from `seed`, so stochastic predictors are reproducible.
pub fn eval_predictor(
    predictor: &dyn LatentPredictor,
    dataset: &Dataset,
    seed: u64,
) -> Result<CosineStats, EvalError> {
    if dataset.samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut cosines = Vec::with_capacity(dataset.samples.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        let key = rng::mix(seed, streams::SAMPLER, i as u64);
        let z_hat = predictor.predict(&s.z_local, &s.condition, key)?;
        cosines.push(cosine_similarity(&z_hat, &s.z_extended)?);
    }
    let n = cosines.len() as f64;
    let mean = cosines.iter().sum::<f64>() / n;
    let var = cosines.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    #[allow(unused_imports)]
    use num_traits::Float;
    Ok(CosineStats {
        mean,
        std: var.sqrt(),
        count: cosines.len(),
    })
}
