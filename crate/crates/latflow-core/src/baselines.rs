//! Comparison predictors: a direct MLP regressor and a denoising
//! diffusion model, both conditioned on `(z_local, c)` so every
//! predictor family works from the same information.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float; // float intrinsics without std

use crate::codec::{CodecError, Reader, Writer};
use crate::linalg::Mat;
use crate::nn::{
    adam_step, batch_backward, batch_forward_trace, decode_net_from, encode_net_into, AdamState,
    NetParams, NetSpec, NnError,
};
use crate::rng;
use crate::world::{ConditionVec, Dataset, COND_DIM};

pub const MLP_MAGIC: [u8; 4] = *b"LFMP";
pub const DIFFUSION_MAGIC: [u8; 4] = *b"LFDM";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("latent length {got} does not match model dimension {want}")]
    LatentDimMismatch { want: usize, got: usize },
    #[error("diffusion step {got} outside 1..={max}")]
    BadStep { got: usize, max: usize },
    #[error("beta schedule values must lie in (0, 1)")]
    BadSchedule,
    #[error("non-finite state at diffusion step {step}")]
    NonFiniteState { step: usize },
    #[error(transparent)]
    Net(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BaselineTrainConfig {
    fn default() -> Self {
        BaselineTrainConfig {
            epochs: 40,
            batch_size: 512,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Direct regressor from `[condition, z_local]` to the extended latent.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPredictor {
    pub net: NetParams,
    pub latent_dim: usize,
}

impl MlpPredictor {
    pub fn init(latent_dim: usize, hidden: usize, seed: u64) -> Self {
        let spec =
            NetSpec::new(alloc::vec![COND_DIM + latent_dim, hidden, hidden, latent_dim]).unwrap();
        MlpPredictor {
            net: NetParams::init(spec, rng::mix(seed, rng::streams::INIT, 4)),
            latent_dim,
        }
    }

    pub fn predict(&self, z_local: &[f64], cond: &ConditionVec) -> Result<Vec<f64>, BaselineError> {
        if z_local.len() != self.latent_dim {
            return Err(BaselineError::LatentDimMismatch {
                want: self.latent_dim,
                got: z_local.len(),
            });
        }
        let mut input = alloc::vec![0.0; COND_DIM + self.latent_dim];
        input[..COND_DIM].copy_from_slice(cond.as_slice());
        input[COND_DIM..].copy_from_slice(z_local);
        Ok(crate::nn::forward(&self.net, &input)?)
    }
}

/// Mean over the batch of per-sample squared errors
/// `|net(c, z_local) - z_extended|^2`, plus the parameter gradient.
pub fn mlp_loss(
    model: &MlpPredictor,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<(f64, Vec<f64>), BaselineError> {
    let n = indices.len();
    let d = model.latent_dim;
    let mut x = Mat::zeros(n, COND_DIM + d);
    let mut y = Mat::zeros(n, d);
    for (row, &i) in indices.iter().enumerate() {
        let s = &dataset.samples[i];
        x.row_mut(row)[..COND_DIM].copy_from_slice(s.condition.as_slice());
        x.row_mut(row)[COND_DIM..].copy_from_slice(&s.z_local);
        y.row_mut(row).copy_from_slice(&s.z_extended);
    }
    let (out, trace) = batch_forward_trace(&model.net, &x)?;
    let mut loss = 0.0;
    let mut dout = Mat::zeros(n, d);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for ((g, &o), &t) in dout.row_mut(i).iter_mut().zip(out.row(i)).zip(y.row(i)) {
            let e = o - t;
            loss += e * e;
            *g = 2.0 * e * inv_n;
        }
    }
    let (grad, _) = batch_backward(&model.net, &trace, &dout)?;
    Ok((loss * inv_n, grad))
}

/// Trains the regressor; deterministic in the seed. Returns the model
/// and per-epoch mean loss.
pub fn train_mlp(
    mut model: MlpPredictor,
    dataset: &Dataset,
    cfg: &BaselineTrainConfig,
) -> Result<(MlpPredictor, Vec<f64>), BaselineError> {
    if dataset.latent_dim != model.latent_dim {
        return Err(BaselineError::LatentDimMismatch {
            want: model.latent_dim,
            got: dataset.latent_dim,
        });
    }
    let mut opt = AdamState::new(model.net.values().len(), cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, rng::streams::SHUFFLE, epoch as u64);
        let order = rng::shuffled_indices(&mut shuffle, dataset.samples.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grad) = mlp_loss(&model, dataset, chunk)?;
            adam_step(&mut model.net, &mut opt, &grad)?;
            loss_sum += loss * chunk.len() as f64;
        }
        curve.push(loss_sum / dataset.samples.len() as f64);
    }
    Ok((model, curve))
}

/// Linear noise schedule and its cumulative products.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Betas linearly spaced from `beta_min` to `beta_max` over `t`
    /// steps (a single step uses `beta_min`).
    pub fn linear(beta_min: f64, beta_max: f64, t: usize) -> Result<Self, BaselineError> {
        if t == 0 || beta_min <= 0.0 || beta_max >= 1.0 || beta_max < beta_min {
            return Err(BaselineError::BadSchedule);
        }
        let mut betas = Vec::with_capacity(t);
        for i in 0..t {
            let frac = if t == 1 { 0.0 } else { i as f64 / (t - 1) as f64 };
            betas.push(beta_min + frac * (beta_max - beta_min));
        }
        let mut alpha_bars = Vec::with_capacity(t);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(DiffusionSchedule { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t in 1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// Cumulative product of `(1 - beta)` up to step `t`; `t = 0` is 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

/// Noise-prediction network over `[t/T, condition, z_local, x_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPredictor {
    pub net: NetParams,
    pub schedule: DiffusionSchedule,
    pub latent_dim: usize,
}

impl DiffusionPredictor {
    pub fn init(latent_dim: usize, hidden: usize, t_steps: usize, seed: u64) -> Self {
        let spec = NetSpec::new(alloc::vec![
            1 + COND_DIM + 2 * latent_dim,
            hidden,
            hidden,
            latent_dim
        ])
        .unwrap();
        DiffusionPredictor {
            net: NetParams::init(spec, rng::mix(seed, rng::streams::INIT, 5)),
            schedule: DiffusionSchedule::linear(1e-4, 0.2, t_steps).unwrap(),
            latent_dim,
        }
    }

    fn fill_input(&self, row: &mut [f64], t: usize, cond: &[f64], z_local: &[f64], x_t: &[f64]) {
        let d = self.latent_dim;
        row[0] = t as f64 / self.schedule.steps() as f64;
        row[1..1 + COND_DIM].copy_from_slice(cond);
        row[1 + COND_DIM..1 + COND_DIM + d].copy_from_slice(z_local);
        row[1 + COND_DIM + d..].copy_from_slice(x_t);
    }

    /// Predicted noise at step `t`.
    pub fn predict_noise(
        &self,
        t: usize,
        cond: &ConditionVec,
        z_local: &[f64],
        x_t: &[f64],
    ) -> Result<Vec<f64>, BaselineError> {
        if t == 0 || t > self.schedule.steps() {
            return Err(BaselineError::BadStep {
                got: t,
                max: self.schedule.steps(),
            });
        }
        if z_local.len() != self.latent_dim || x_t.len() != self.latent_dim {
            return Err(BaselineError::LatentDimMismatch {
                want: self.latent_dim,
                got: z_local.len().max(x_t.len()),
            });
        }
        let mut input = alloc::vec![0.0; 1 + COND_DIM + 2 * self.latent_dim];
        self.fill_input(&mut input, t, cond.as_slice(), z_local, x_t);
        Ok(crate::nn::forward(&self.net, &input)?)
    }
}

/// Closed-form forward diffusion:
/// `sqrt(alpha_bar_t) target + sqrt(1 - alpha_bar_t) noise`.
pub fn diffusion_forward(
    schedule: &DiffusionSchedule,
    z_target: &[f64],
    t: usize,
    noise: &[f64],
) -> Result<Vec<f64>, BaselineError> {
    if t == 0 || t > schedule.steps() {
        return Err(BaselineError::BadStep {
            got: t,
            max: schedule.steps(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(z_target
        .iter()
        .zip(noise)
        .map(|(&z, &e)| signal * z + spread * e)
        .collect())
}

/// Noise-prediction MSE over a batch (same per-sample squared-norm
/// convention as the other losses), with parameter gradient. One
/// `(t, noise)` draw per sample is supplied by the caller.
pub fn diffusion_loss(
    model: &DiffusionPredictor,
    dataset: &Dataset,
    indices: &[usize],
    ts: &[usize],
    noises: &Mat,
) -> Result<(f64, Vec<f64>), BaselineError> {
    let n = indices.len();
    let d = model.latent_dim;
    let width = 1 + COND_DIM + 2 * d;
    let mut x = Mat::zeros(n, width);
    for (row, (&i, &t)) in indices.iter().zip(ts).enumerate() {
        let s = &dataset.samples[i];
        let x_t = diffusion_forward(&model.schedule, &s.z_extended, t, &noises.row(row)[..d])?;
        model.fill_input(
            x.row_mut(row),
            t,
            s.condition.as_slice(),
            &s.z_local,
            &x_t,
        );
    }
    let (out, trace) = batch_forward_trace(&model.net, &x)?;
    let mut loss = 0.0;
    let mut dout = Mat::zeros(n, d);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for ((g, &o), &e) in dout
            .row_mut(i)
            .iter_mut()
            .zip(out.row(i))
            .zip(noises.row(i))
        {
            let err = o - e;
            loss += err * err;
            *g = 2.0 * err * inv_n;
        }
    }
    let (grad, _) = batch_backward(&model.net, &trace, &dout)?;
    Ok((loss * inv_n, grad))
}

/// Trains the noise predictor; deterministic in the seed.
pub fn train_diffusion(
    mut model: DiffusionPredictor,
    dataset: &Dataset,
    cfg: &BaselineTrainConfig,
) -> Result<(DiffusionPredictor, Vec<f64>), BaselineError> {
    if dataset.latent_dim != model.latent_dim {
        return Err(BaselineError::LatentDimMismatch {
            want: model.latent_dim,
            got: dataset.latent_dim,
        });
    }
    let t_max = model.schedule.steps();
    let mut opt = AdamState::new(model.net.values().len(), cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, rng::streams::SHUFFLE, epoch as u64);
        let order = rng::shuffled_indices(&mut shuffle, dataset.samples.len());
        let mut step_rng = rng::stream(cfg.seed, rng::streams::DIFFUSION_STEP, epoch as u64);
        let mut noise_rng = rng::stream(cfg.seed, rng::streams::NOISE, epoch as u64);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let ts: Vec<usize> = chunk
                .iter()
                .map(|_| 1 + rng::next_index(&mut step_rng, t_max))
                .collect();
            let mut noises = Mat::zeros(chunk.len(), model.latent_dim);
            for v in &mut noises.data {
                *v = rng::next_normal(&mut noise_rng);
            }
            let (loss, grad) = diffusion_loss(&model, dataset, chunk, &ts, &noises)?;
            adam_step(&mut model.net, &mut opt, &grad)?;
            loss_sum += loss * chunk.len() as f64;
        }
        curve.push(loss_sum / dataset.samples.len() as f64);
    }
    Ok((model, curve))
}

/// Ancestral sampling from pure noise, conditioned on `(z_local, c)`.
/// The injected noises come through `draw`, so tests can force them.
fn sample_with(
    model: &DiffusionPredictor,
    z_local: &[f64],
    cond: &ConditionVec,
    mut draw: impl FnMut(usize) -> Vec<f64>,
) -> Result<Vec<f64>, BaselineError> {
    let t_max = model.schedule.steps();
    let mut x = draw(t_max + 1); // initial state x_T
    for t in (1..=t_max).rev() {
        let eps = model.predict_noise(t, cond, z_local, &x)?;
        let beta = model.schedule.beta(t);
        let alpha = 1.0 - beta;
        let ab_t = model.schedule.alpha_bar(t);
        let ab_prev = model.schedule.alpha_bar(t - 1);
        let eps_scale = beta / (1.0 - ab_t).sqrt();
        let sigma = ((1.0 - ab_prev) / (1.0 - ab_t) * beta).sqrt();
        let zeta = if t > 1 {
            draw(t)
        } else {
            alloc::vec![0.0; model.latent_dim]
        };
        for ((xi, &e), &z) in x.iter_mut().zip(&eps).zip(&zeta) {
            *xi = (*xi - eps_scale * e) / alpha.sqrt() + sigma * z;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFiniteState { step: t });
        }
    }
    Ok(x)
}

/// Seeded ancestral sample; identical seeds give identical samples.
pub fn diffusion_sample(
    model: &DiffusionPredictor,
    z_local: &[f64],
    cond: &ConditionVec,
    sample_seed: u64,
) -> Result<Vec<f64>, BaselineError> {
    if z_local.len() != model.latent_dim {
        return Err(BaselineError::LatentDimMismatch {
            want: model.latent_dim,
            got: z_local.len(),
        });
    }
    let d = model.latent_dim;
    sample_with(model, z_local, cond, |t| {
        let mut r = rng::stream(sample_seed, rng::streams::SAMPLER, t as u64);
        rng::normal_vec(&mut r, d)
    })
}

/// Deterministic sample with every injected noise forced to zero.
pub fn diffusion_sample_noiseless(
    model: &DiffusionPredictor,
    z_local: &[f64],
    cond: &ConditionVec,
    x_init: &[f64],
) -> Result<Vec<f64>, BaselineError> {
    let d = model.latent_dim;
    let init = x_init.to_vec();
    let mut first = true;
    sample_with(model, z_local, cond, move |_| {
        if first {
            first = false;
            init.clone()
        } else {
            alloc::vec![0.0; d]
        }
    })
}

/// Serializes to the `LFMP` layout: magic, version, latent dim, then
/// the embedded `LFNN` block.
pub fn encode_mlp(model: &MlpPredictor) -> Vec<u8> {
    let mut w = Writer::new(&MLP_MAGIC);
    w.put_u32(model.latent_dim as u32);
    encode_net_into(&mut w, &model.net);
    w.finish()
}

pub fn decode_mlp(bytes: &[u8]) -> Result<MlpPredictor, CodecError> {
    let mut r = Reader::new(bytes, &MLP_MAGIC)?;
    let d = r.take_u32()? as usize;
    let net = decode_net_from(&mut r)?;
    r.expect_end()?;
    if net.spec().input_width() != COND_DIM + d || net.spec().output_width() != d {
        return Err(CodecError::Invalid("network shape mismatch".into()));
    }
    Ok(MlpPredictor {
        net,
        latent_dim: d,
    })
}

/// Serializes to the `LFDM` layout: magic, version, latent dim, step
/// count, beta bounds, then the embedded `LFNN` block.
pub fn encode_diffusion(model: &DiffusionPredictor) -> Vec<u8> {
    let mut w = Writer::new(&DIFFUSION_MAGIC);
    w.put_u32(model.latent_dim as u32);
    w.put_u32(model.schedule.steps() as u32);
    w.put_f32(model.schedule.betas[0] as f32);
    w.put_f32(*model.schedule.betas.last().unwrap() as f32);
    encode_net_into(&mut w, &model.net);
    w.finish()
}

pub fn decode_diffusion(bytes: &[u8]) -> Result<DiffusionPredictor, CodecError> {
    let mut r = Reader::new(bytes, &DIFFUSION_MAGIC)?;
    let d = r.take_u32()? as usize;
    let t = r.take_u32()? as usize;
    let beta_min = r.take_f32()? as f64;
    let beta_max = r.take_f32()? as f64;
    let net = decode_net_from(&mut r)?;
    r.expect_end()?;
    let schedule = DiffusionSchedule::linear(beta_min, beta_max, t)
        .map_err(|e| CodecError::Invalid(alloc::format!("{e}")))?;
    if net.spec().input_width() != 1 + COND_DIM + 2 * d || net.spec().output_width() != d {
        return Err(CodecError::Invalid("network shape mismatch".into()));
    }
    Ok(DiffusionPredictor {
        net,
        schedule,
        latent_dim: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{central_diff_subset, rel_error, GRAD_CHECK_STEP};
    use crate::world::{LatentPairSample, Split};

    fn toy_dataset(d: usize, n: usize, seed: u64) -> Dataset {
        let mut ds = Dataset::new(Split::Train, d);
        let mut r = rng::stream(seed, rng::streams::NOISE, 9);
        for _ in 0..n {
            let z0 = rng::normal_vec(&mut r, d);
            let z1: Vec<f64> = z0.iter().map(|v| 0.5 * v + 0.3).collect();
            let mut cond = ConditionVec::zeros();
            cond.0[0] = rng::next_range(&mut r, -1.0, 1.0);
            ds.push(LatentPairSample {
                z_local: z0,
                z_extended: z1,
                condition: cond,
            })
            .unwrap();
        }
        ds
    }

    #[test]
    fn zero_weight_mlp_predicts_zero() {
        let mut m = MlpPredictor::init(3, 8, 1);
        for v in m.net.values_mut() {
            *v = 0.0;
        }
        let out = m.predict(&[1.0, 2.0, 3.0], &ConditionVec::zeros()).unwrap();
        assert_eq!(out, alloc::vec![0.0; 3]);
    }

    #[test]
    fn mlp_predict_is_deterministic() {
        let m = MlpPredictor::init(3, 8, 2);
        let z = [0.3, -0.8, 0.1];
        let c = ConditionVec::zeros();
        assert_eq!(m.predict(&z, &c).unwrap(), m.predict(&z, &c).unwrap());
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let m = MlpPredictor::init(3, 8, 4);
        let ds = toy_dataset(3, 6, 3);
        let idx: Vec<usize> = (0..6).collect();
        let (_, grad) = mlp_loss(&m, &ds, &idx).unwrap();
        let mut r = rng::stream(5, rng::streams::GRAD_CHECK, 2);
        let coords: Vec<usize> = (0..120)
            .map(|_| rng::next_index(&mut r, m.net.values().len()))
            .collect();
        let fd = central_diff_subset(
            |theta: &[f64]| {
                let mut mm = m.clone();
                mm.net.values_mut().copy_from_slice(theta);
                mlp_loss(&mm, &ds, &idx).unwrap().0
            },
            m.net.values(),
            &coords,
            GRAD_CHECK_STEP,
        );
        let mut max_rel = 0.0_f64;
        for (&c, &n) in coords.iter().zip(&fd) {
            max_rel = max_rel.max(rel_error(grad[c], n));
        }
        assert!(max_rel < 1e-4, "max rel error {max_rel}");
    }

    #[test]
    fn mlp_training_learns_affine_map() {
        let ds = toy_dataset(3, 512, 7);
        let cfg = BaselineTrainConfig {
            epochs: 60,
            batch_size: 128,
            ..Default::default()
        };
        let (m, curve) = train_mlp(MlpPredictor::init(3, 32, 1), &ds, &cfg).unwrap();
        assert!(curve.last().unwrap() < &0.01, "final loss {:?}", curve.last());
        let (a, _) = train_mlp(MlpPredictor::init(3, 32, 1), &ds, &cfg).unwrap();
        assert_eq!(encode_mlp(&a), encode_mlp(&m));
    }

    #[test]
    fn schedule_bounds_and_monotonicity() {
        let s = DiffusionSchedule::linear(1e-4, 0.2, 10).unwrap();
        assert_eq!(s.steps(), 10);
        assert!((s.beta(1) - 1e-4).abs() < 1e-18);
        assert!((s.beta(10) - 0.2).abs() < 1e-15);
        for t in 1..=10 {
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            assert!(
                s.alpha_bar(t) < s.alpha_bar(t - 1),
                "alpha_bar not strictly decreasing at {t}"
            );
        }
        assert!(DiffusionSchedule::linear(0.0, 0.2, 10).is_err());
        assert!(DiffusionSchedule::linear(1e-4, 1.0, 10).is_err());
        assert!(DiffusionSchedule::linear(1e-4, 0.2, 0).is_err());
    }

    #[test]
    fn forward_diffusion_limits() {
        // beta -> 0 keeps the target; zero noise scales it exactly
        let tiny = DiffusionSchedule::linear(1e-12, 2e-12, 3).unwrap();
        let z = [0.7, -0.4];
        let noisy = diffusion_forward(&tiny, &z, 3, &[0.9, 0.9]).unwrap();
        assert!((noisy[0] - z[0]).abs() < 1e-5);
        assert!((noisy[1] - z[1]).abs() < 1e-5);

        let s = DiffusionSchedule::linear(1e-4, 0.2, 10).unwrap();
        let scaled = diffusion_forward(&s, &z, 7, &[0.0, 0.0]).unwrap();
        let f = s.alpha_bar(7).sqrt();
        assert!((scaled[0] - f * z[0]).abs() < 1e-15);
        assert!((scaled[1] - f * z[1]).abs() < 1e-15);
    }

    #[test]
    fn forward_diffusion_variance_matches_schedule() {
        let s = DiffusionSchedule::linear(1e-4, 0.2, 10).unwrap();
        let t = 6;
        let z = [0.25];
        let mut r = rng::stream(11, rng::streams::NOISE, 4);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let e = [rng::next_normal(&mut r)];
            let x = diffusion_forward(&s, &z, t, &e).unwrap()[0];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let want = 1.0 - s.alpha_bar(t);
        assert!(
            (var - want).abs() / want < 0.05,
            "empirical {var}, schedule {want}"
        );
    }

    #[test]
    fn exact_noise_net_has_zero_loss() {
        // Single-weight-layer net, zero weights, bias = the injected
        // noise of the one sample in the batch.
        let d = 2;
        let spec = NetSpec::new(alloc::vec![1 + COND_DIM + 2 * d, d]).unwrap();
        let mut values = alloc::vec![0.0; spec.param_count()];
        let n = values.len();
        let noise = [0.31, -1.2];
        values[n - 2] = noise[0];
        values[n - 1] = noise[1];
        let model = DiffusionPredictor {
            net: NetParams::from_values(spec, values).unwrap(),
            schedule: DiffusionSchedule::linear(1e-4, 0.2, 10).unwrap(),
            latent_dim: d,
        };
        let ds = toy_dataset(d, 1, 1);
        let noises = Mat::from_row(&noise);
        let (loss, _) = diffusion_loss(&model, &ds, &[0], &[4], &noises).unwrap();
        assert!(loss < 1e-24, "loss {loss}");
    }

    #[test]
    fn diffusion_gradient_matches_finite_differences() {
        let m = DiffusionPredictor::init(2, 8, 10, 6);
        let ds = toy_dataset(2, 5, 8);
        let idx: Vec<usize> = (0..5).collect();
        let ts = [1, 4, 7, 10, 2];
        let mut r = rng::stream(9, rng::streams::NOISE, 1);
        let mut noises = Mat::zeros(5, 2);
        for v in &mut noises.data {
            *v = rng::next_normal(&mut r);
        }
        let (_, grad) = diffusion_loss(&m, &ds, &idx, &ts, &noises).unwrap();
        let coords: Vec<usize> = (0..120)
            .map(|_| rng::next_index(&mut r, m.net.values().len()))
            .collect();
        let fd = central_diff_subset(
            |theta: &[f64]| {
                let mut mm = m.clone();
                mm.net.values_mut().copy_from_slice(theta);
                diffusion_loss(&mm, &ds, &idx, &ts, &noises).unwrap().0
            },
            m.net.values(),
            &coords,
            GRAD_CHECK_STEP,
        );
        let mut max_rel = 0.0_f64;
        for (&c, &n) in coords.iter().zip(&fd) {
            max_rel = max_rel.max(rel_error(grad[c], n));
        }
        assert!(max_rel < 1e-4, "max rel error {max_rel}");
    }

    #[test]
    fn single_step_zero_net_rescales_initial_noise() {
        // T=1: x_0 = x_1 / sqrt(1 - beta_1), no injected noise.
        let mut m = DiffusionPredictor::init(2, 8, 1, 3);
        for v in m.net.values_mut() {
            *v = 0.0;
        }
        let x_init = [0.8, -0.5];
        let out =
            diffusion_sample_noiseless(&m, &[0.0, 0.0], &ConditionVec::zeros(), &x_init).unwrap();
        let f = 1.0 / (1.0 - m.schedule.beta(1)).sqrt();
        assert!((out[0] - f * x_init[0]).abs() < 1e-12);
        assert!((out[1] - f * x_init[1]).abs() < 1e-12);
    }

    #[test]
    fn sampling_seeds_agree_and_differ() {
        let m = DiffusionPredictor::init(3, 8, 10, 5);
        let z = [0.1, 0.2, 0.3];
        let c = ConditionVec::zeros();
        let a = diffusion_sample(&m, &z, &c, 42).unwrap();
        let b = diffusion_sample(&m, &z, &c, 42).unwrap();
        let other = diffusion_sample(&m, &z, &c, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn sampling_reports_non_finite_state() {
        let mut m = DiffusionPredictor::init(1, 8, 10, 5);
        for v in m.net.values_mut() {
            *v = 1e200;
        }
        let err = diffusion_sample(&m, &[1.0], &ConditionVec::zeros(), 1).unwrap_err();
        assert!(matches!(err, BaselineError::NonFiniteState { .. }));
    }

    #[test]
    fn checkpoints_roundtrip_byte_exact() {
        let m = MlpPredictor::init(4, 8, 11);
        let bytes = encode_mlp(&m);
        assert_eq!(encode_mlp(&decode_mlp(&bytes).unwrap()), bytes);

        let dm = DiffusionPredictor::init(3, 8, 10, 12);
        let dbytes = encode_diffusion(&dm);
        let back = decode_diffusion(&dbytes).unwrap();
        assert_eq!(encode_diffusion(&back), dbytes);
        assert_eq!(back.schedule.steps(), 10);
    }

    #[test]
    fn checkpoints_reject_corruption() {
        let m = MlpPredictor::init(2, 8, 1);
        let mut bytes = encode_mlp(&m);
        bytes[0] = b'Z';
        assert!(matches!(
            decode_mlp(&bytes).unwrap_err(),
            CodecError::BadMagic { .. }
        ));
        let dm = DiffusionPredictor::init(2, 8, 10, 1);
        let mut dbytes = encode_diffusion(&dm);
        dbytes.truncate(20);
        assert!(matches!(
            decode_diffusion(&dbytes).unwrap_err(),
            CodecError::Truncated { .. }
        ));
    }
}
