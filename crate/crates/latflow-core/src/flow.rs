//! Conditional flow matching: the velocity field v(tau, c, z), its
//! training loss against straight-line transport targets, and explicit
//! Euler integration that carries a local latent to the predicted
//! extended latent.
//!
//! Pairs (z_local, z_extended) are physically coupled — both encode
//! the same scene — so the per-pair optimal-transport target velocity
//! is exactly their difference, constant in tau.

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
use crate::world::{ConditionVec, Dataset, LatentPairSample, COND_DIM};

pub const FLOW_MAGIC: [u8; 4] = *b"LFVF";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("latent length {got} does not match model dimension {want}")]
    LatentDimMismatch { want: usize, got: usize },
    #[error("condition length {got}, expected {want}")]
    CondDimMismatch { want: usize, got: usize },
    #[error("integration steps must be at least 1")]
    BadStepCount,
    #[error("non-finite state after integration step {step}")]
    NonFiniteState { step: usize },
    #[error("tau {0} outside [0, 1]")]
    BadTau(f64),
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Velocity field network. Conditional input layout is
/// `[tau, condition (32), z]`; the unconditional ablation drops the
/// condition block, shrinking the input width by exactly 32.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldModel {
    pub net: NetParams,
    pub conditional: bool,
    pub latent_dim: usize,
    pub default_steps: usize,
}

impl VelocityFieldModel {
    pub fn init(latent_dim: usize, hidden: usize, conditional: bool, seed: u64) -> Self {
        let cond = if conditional { COND_DIM } else { 0 };
        let spec = NetSpec::new(alloc::vec![
            1 + cond + latent_dim,
            hidden,
            hidden,
            latent_dim
        ])
        .unwrap();
        VelocityFieldModel {
            net: NetParams::init(spec, rng::mix(seed, rng::streams::INIT, 3)),
            conditional,
            latent_dim,
            default_steps: 10,
        }
    }

    pub fn input_width(&self) -> usize {
        1 + if self.conditional { COND_DIM } else { 0 } + self.latent_dim
    }

    fn check_dims(&self, cond: &[f64], z: &[f64]) -> Result<(), FlowError> {
        if z.len() != self.latent_dim {
            return Err(FlowError::LatentDimMismatch {
                want: self.latent_dim,
                got: z.len(),
            });
        }
        if self.conditional && cond.len() != COND_DIM {
            return Err(FlowError::CondDimMismatch {
                want: COND_DIM,
                got: cond.len(),
            });
        }
        Ok(())
    }

    fn fill_input(&self, row: &mut [f64], tau: f64, cond: &[f64], z: &[f64]) {
        row[0] = tau;
        if self.conditional {
            row[1..1 + COND_DIM].copy_from_slice(cond);
            row[1 + COND_DIM..].copy_from_slice(z);
        } else {
            row[1..].copy_from_slice(z);
        }
    }

    /// Evaluates v(tau, c, z). The condition is ignored by the
    /// unconditional variant.
    pub fn velocity(&self, tau: f64, cond: &[f64], z: &[f64]) -> Result<Vec<f64>, FlowError> {
        self.check_dims(cond, z)?;
        let mut input = alloc::vec![0.0; self.input_width()];
        self.fill_input(&mut input, tau, cond, z);
        Ok(crate::nn::forward(&self.net, &input)?)
    }
}

/// Straight-line interpolant `(1 - tau) z0 + tau z1`.
pub fn interpolate(z0: &[f64], z1: &[f64], tau: f64) -> Result<Vec<f64>, FlowError> {
    if z0.len() != z1.len() {
        return Err(FlowError::LatentDimMismatch {
            want: z0.len(),
            got: z1.len(),
        });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(FlowError::BadTau(tau));
    }
    Ok(z0
        .iter()
        .zip(z1)
        .map(|(&a, &b)| (1.0 - tau) * a + tau * b)
        .collect())
}

/// Per-pair transport target `z1 - z0`, constant in tau.
pub fn target_velocity(z0: &[f64], z1: &[f64]) -> Vec<f64> {
    z0.iter().zip(z1).map(|(&a, &b)| b - a).collect()
}

/// Mean over the batch of per-sample squared Euclidean errors
/// `|v(tau, c, z_tau) - (z1 - z0)|^2`, plus the exact parameter
/// gradient.
pub fn cfm_loss(
    model: &VelocityFieldModel,
    batch: &[LatentPairSample],
    taus: &[f64],
) -> Result<(f64, Vec<f64>), FlowError> {
    assert_eq!(batch.len(), taus.len(), "one tau per sample");
    let n = batch.len();
    let d = model.latent_dim;
    let width = model.input_width();
    let mut x = Mat::zeros(n, width);
    let mut u = Mat::zeros(n, d);
    for (i, (s, &tau)) in batch.iter().zip(taus).enumerate() {
        if s.z_local.len() != d {
            return Err(FlowError::LatentDimMismatch {
                want: d,
                got: s.z_local.len(),
            });
        }
        let z_tau = interpolate(&s.z_local, &s.z_extended, tau)?;
        model.fill_input(x.row_mut(i), tau, s.condition.as_slice(), &z_tau);
        u.row_mut(i)
            .copy_from_slice(&target_velocity(&s.z_local, &s.z_extended));
    }
    let (v, trace) = batch_forward_trace(&model.net, &x)?;
    let mut loss = 0.0;
    let mut dv = Mat::zeros(n, d);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for ((g, &vi), &ui) in dv.row_mut(i).iter_mut().zip(v.row(i)).zip(u.row(i)) {
            let e = vi - ui;
            loss += e * e;
            *g = 2.0 * e * inv_n;
        }
    }
    let (grad, _) = batch_backward(&model.net, &trace, &dv)?;
    Ok((loss * inv_n, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        FlowTrainConfig {
            epochs: 40,
            batch_size: 512,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trains the velocity field on latent pairs. Shuffling and the
/// per-sample tau draws come from counter-derived streams, so the
/// result is a pure function of (model, dataset, config). Returns the
/// model and the per-epoch mean loss curve.
pub fn train_flow(
    mut model: VelocityFieldModel,
    dataset: &Dataset,
    cfg: &FlowTrainConfig,
) -> Result<(VelocityFieldModel, Vec<f64>), FlowError> {
    if dataset.latent_dim != model.latent_dim {
        return Err(FlowError::LatentDimMismatch {
            want: model.latent_dim,
            got: dataset.latent_dim,
        });
    }
    let mut opt = AdamState::new(model.net.values().len(), cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, rng::streams::SHUFFLE, epoch as u64);
        let order = rng::shuffled_indices(&mut shuffle, dataset.samples.len());
        let mut tau_rng = rng::stream(cfg.seed, rng::streams::TAU, epoch as u64);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LatentPairSample> =
                chunk.iter().map(|&i| dataset.samples[i].clone()).collect();
            let taus: Vec<f64> = batch.iter().map(|_| rng::next_f64(&mut tau_rng)).collect();
            let (loss, grad) = cfm_loss(&model, &batch, &taus)?;
            adam_step(&mut model.net, &mut opt, &grad)?;
            loss_sum += loss * batch.len() as f64;
        }
        curve.push(loss_sum / dataset.samples.len() as f64);
    }
    Ok((model, curve))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub steps: usize,
}

impl IntegrationConfig {
    pub fn new(steps: usize) -> Result<Self, FlowError> {
        if steps == 0 {
            return Err(FlowError::BadStepCount);
        }
        Ok(IntegrationConfig { steps })
    }
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig { steps: 10 }
    }
}

/// Explicit Euler transport: K steps of size 1/K, evaluating the field
/// at the left endpoints tau = k/K. Errors out (naming the step) if the
/// state leaves the finite range.
pub fn integrate(
    model: &VelocityFieldModel,
    z0: &[f64],
    cond: &ConditionVec,
    cfg: IntegrationConfig,
) -> Result<Vec<f64>, FlowError> {
    if cfg.steps == 0 {
        return Err(FlowError::BadStepCount);
    }
    model.check_dims(cond.as_slice(), z0)?;
    let k_total = cfg.steps as f64;
    let mut z = z0.to_vec();
    let mut input = alloc::vec![0.0; model.input_width()];
    for k in 0..cfg.steps {
        let tau = k as f64 / k_total;
        self_fill(model, &mut input, tau, cond.as_slice(), &z);
        let v = crate::nn::forward(&model.net, &input)?;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += vi / k_total;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFiniteState { step: k });
        }
    }
    Ok(z)
}

// Free-function shim so `integrate` can reuse the input packing while
// holding a mutable borrow of the scratch row.
fn self_fill(model: &VelocityFieldModel, row: &mut [f64], tau: f64, cond: &[f64], z: &[f64]) {
    model.fill_input(row, tau, cond, z);
}

/// Transports every sample's local latent under its own condition.
/// Predictions only; wall-clock measurement is the caller's concern.
pub fn predict_batch(
    model: &VelocityFieldModel,
    samples: &[LatentPairSample],
    cfg: IntegrationConfig,
) -> Result<Vec<Vec<f64>>, FlowError> {
    samples
        .iter()
        .map(|s| integrate(model, &s.z_local, &s.condition, cfg))
        .collect()
}

/// Outcome of the self-contained 2-D transport oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCfmReport {
    /// Mean training loss over the final 50 optimizer steps.
    pub final_loss: f64,
    /// Per-condition L2 distance between the mean of the transported
    /// samples and the target mean.
    pub mean_errors: Vec<f64>,
}

/// Trains a small conditional field to transport the standard normal
/// onto a tight normal centered at a 2-D condition `c ~ U[-2, 2]^2`,
/// then measures how close transported sample means land to fresh
/// conditions. Exercises the full loss/optimizer/integration stack
/// against an analytically known answer.
pub fn run_toy_cfm(
    seed: u64,
    optimizer_steps: usize,
    target_sigma: f64,
    conditions: usize,
) -> Result<ToyCfmReport, FlowError> {
    let d = 2;
    let mut model = VelocityFieldModel::init(d, 256, true, seed);
    let mut opt = AdamState::new(model.net.values().len(), 3e-3);
    let batch = 512;
    let mut recent = Vec::new();
    for step in 0..optimizer_steps {
        // step decay: finish the run with finer updates
        if step == optimizer_steps / 2 {
            opt.learning_rate = 1e-3;
        } else if step == 3 * optimizer_steps / 4 {
            opt.learning_rate = 3e-4;
        }
        let mut r = rng::stream(seed, rng::streams::TOY, step as u64);
        let mut samples = Vec::with_capacity(batch);
        let mut taus = Vec::with_capacity(batch);
        for _ in 0..batch {
            let c = [
                rng::next_range(&mut r, -2.0, 2.0),
                rng::next_range(&mut r, -2.0, 2.0),
            ];
            let z0 = rng::normal_vec(&mut r, d);
            let z1: Vec<f64> = c
                .iter()
                .map(|&ci| ci + target_sigma * rng::next_normal(&mut r))
                .collect();
            let mut cond = ConditionVec::zeros();
            cond.0[0] = c[0];
            cond.0[1] = c[1];
            samples.push(LatentPairSample {
                z_local: z0,
                z_extended: z1,
                condition: cond,
            });
            taus.push(rng::next_f64(&mut r));
        }
        let (loss, grad) = cfm_loss(&model, &samples, &taus)?;
        adam_step(&mut model.net, &mut opt, &grad)?;
        recent.push(loss);
        if recent.len() > 50 {
            recent.remove(0);
        }
    }
    let final_loss = recent.iter().sum::<f64>() / recent.len().max(1) as f64;

    let mut mean_errors = Vec::with_capacity(conditions);
    let mut r = rng::stream(seed, rng::streams::TOY, u64::MAX / 2);
    let cfg = IntegrationConfig::default();
    for _ in 0..conditions {
        let c = [
            rng::next_range(&mut r, -2.0, 2.0),
            rng::next_range(&mut r, -2.0, 2.0),
        ];
        let mut cond = ConditionVec::zeros();
        cond.0[0] = c[0];
        cond.0[1] = c[1];
        let mut mean = [0.0f64; 2];
        let n = 1000;
        for _ in 0..n {
            let z0 = rng::normal_vec(&mut r, d);
            let z = integrate(&model, &z0, &cond, cfg)?;
            mean[0] += z[0];
            mean[1] += z[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        mean_errors.push(((mean[0] - c[0]).powi(2) + (mean[1] - c[1]).powi(2)).sqrt());
    }
    Ok(ToyCfmReport {
        final_loss,
        mean_errors,
    })
}

/// Serializes to the `LFVF` layout: magic, version, conditional flag,
/// latent dim, default step count, then the embedded `LFNN` block.
pub fn encode_flow(model: &VelocityFieldModel) -> Vec<u8> {
    let mut w = Writer::new(&FLOW_MAGIC);
    w.put_u8(model.conditional as u8);
    w.put_u32(model.latent_dim as u32);
    w.put_u32(model.default_steps as u32);
    encode_net_into(&mut w, &model.net);
    w.finish()
}

pub fn decode_flow(bytes: &[u8]) -> Result<VelocityFieldModel, CodecError> {
    let mut r = Reader::new(bytes, &FLOW_MAGIC)?;
    let conditional = match r.take_u8()? {
        0 => false,
        1 => true,
        k => {
            return Err(CodecError::Invalid(alloc::format!(
                "unknown conditional flag {k}"
            )))
        }
    };
    let d = r.take_u32()? as usize;
    let steps = r.take_u32()? as usize;
    if steps == 0 {
        return Err(CodecError::Invalid("zero default step count".into()));
    }
    let net = decode_net_from(&mut r)?;
    r.expect_end()?;
    let want = 1 + if conditional { COND_DIM } else { 0 } + d;
    if net.spec().input_width() != want || net.spec().output_width() != d {
        return Err(CodecError::Invalid("network shape mismatch".into()));
    }
    Ok(VelocityFieldModel {
        net,
        conditional,
        latent_dim: d,
        default_steps: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{central_diff_subset, rel_error, GRAD_CHECK_STEP};

    fn sample(z0: &[f64], z1: &[f64]) -> LatentPairSample {
        LatentPairSample {
            z_local: z0.to_vec(),
            z_extended: z1.to_vec(),
            condition: ConditionVec::zeros(),
        }
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let z0 = [0.0, 0.0];
        let z1 = [2.0, 4.0];
        assert_eq!(interpolate(&z0, &z1, 0.0).unwrap(), z0);
        assert_eq!(interpolate(&z0, &z1, 1.0).unwrap(), z1);
        assert_eq!(interpolate(&z0, &z1, 0.5).unwrap(), [1.0, 2.0]);
        assert!(matches!(
            interpolate(&z0, &z1, 1.5).unwrap_err(),
            FlowError::BadTau(_)
        ));
    }

    #[test]
    fn target_velocity_cases() {
        assert_eq!(target_velocity(&[1.0, 2.0], &[1.0, 2.0]), [0.0, 0.0]);
        assert_eq!(target_velocity(&[1.0, 1.0], &[3.0, 0.0]), [2.0, -1.0]);
        let a = [0.3, -0.4, 1.1];
        let b = [2.0, 0.0, -0.5];
        let fwd = target_velocity(&a, &b);
        let bwd = target_velocity(&b, &a);
        for (f, w) in fwd.iter().zip(&bwd) {
            assert_eq!(*f, -w);
        }
    }

    #[test]
    fn zero_model_loss_is_mean_squared_target_norm() {
        let mut model = VelocityFieldModel::init(2, 8, true, 1);
        for v in model.net.values_mut() {
            *v = 0.0;
        }
        let batch = [
            sample(&[0.0, 0.0], &[1.0, 1.0]), // |u|^2 = 2
            sample(&[1.0, 0.0], &[1.0, 3.0]), // |u|^2 = 9
        ];
        let (loss, _) = cfm_loss(&model, &batch, &[0.3, 0.8]).unwrap();
        assert!((loss - 5.5).abs() < 1e-12);
    }

    #[test]
    fn exact_model_has_zero_loss() {
        // Single-weight-layer net with zero weights and bias equal to
        // the pair's target velocity reproduces it at any tau.
        let z0 = [0.5, -1.0];
        let z1 = [2.0, 1.5];
        let spec = NetSpec::new(alloc::vec![1 + COND_DIM + 2, 2]).unwrap();
        let mut values = alloc::vec![0.0; spec.param_count()];
        let n = values.len();
        values[n - 2] = z1[0] - z0[0];
        values[n - 1] = z1[1] - z0[1];
        let model = VelocityFieldModel {
            net: NetParams::from_values(spec, values).unwrap(),
            conditional: true,
            latent_dim: 2,
            default_steps: 10,
        };
        let (loss, _) = cfm_loss(&model, &[sample(&z0, &z1)], &[0.42]).unwrap();
        assert!(loss < 1e-24, "loss {loss}");
    }

    #[test]
    fn cfm_gradient_matches_finite_differences() {
        let model = VelocityFieldModel::init(3, 16, true, 5);
        let mut r = rng::stream(6, rng::streams::GRAD_CHECK, 1);
        let batch: Vec<LatentPairSample> = (0..4)
            .map(|_| {
                let z0: Vec<f64> = (0..3).map(|_| rng::next_range(&mut r, -1.0, 1.0)).collect();
                let z1: Vec<f64> = (0..3).map(|_| rng::next_range(&mut r, -1.0, 1.0)).collect();
                let mut cond = ConditionVec::zeros();
                for v in cond.0.iter_mut() {
                    *v = rng::next_range(&mut r, -1.0, 1.0);
                }
                LatentPairSample {
                    z_local: z0,
                    z_extended: z1,
                    condition: cond,
                }
            })
            .collect();
        let taus = [0.1, 0.4, 0.63, 0.9];
        let (_, grad) = cfm_loss(&model, &batch, &taus).unwrap();
        let coords: Vec<usize> = (0..200)
            .map(|_| rng::next_index(&mut r, model.net.values().len()))
            .collect();
        let fd = central_diff_subset(
            |theta: &[f64]| {
                let mut m = model.clone();
                m.net.values_mut().copy_from_slice(theta);
                cfm_loss(&m, &batch, &taus).unwrap().0
            },
            model.net.values(),
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
    fn unconditional_input_is_exactly_32_narrower() {
        let cond = VelocityFieldModel::init(5, 8, true, 1);
        let unc = VelocityFieldModel::init(5, 8, false, 1);
        assert_eq!(cond.input_width() - unc.input_width(), COND_DIM);
    }

    #[test]
    fn integrate_zero_field_returns_start() {
        let mut model = VelocityFieldModel::init(3, 8, true, 2);
        for v in model.net.values_mut() {
            *v = 0.0;
        }
        let z0 = [0.4, -0.2, 1.0];
        for k in [1, 10, 1000] {
            let z = integrate(
                &model,
                &z0,
                &ConditionVec::zeros(),
                IntegrationConfig::new(k).unwrap(),
            )
            .unwrap();
            assert_eq!(z, z0);
        }
    }

    #[test]
    fn integrate_constant_field_adds_field_exactly() {
        // Zero weights, bias = A: v is constant in (tau, c, z).
        let mut model = VelocityFieldModel::init(2, 8, true, 2);
        for v in model.net.values_mut() {
            *v = 0.0;
        }
        let a = [0.7, -1.3];
        let (_, bias_range) = {
            let l = model.net.spec().weight_layers() - 1;
            model.net.layer_ranges(l)
        };
        model.net.values_mut()[bias_range].copy_from_slice(&a);
        let z0 = [1.0, 2.0];
        for k in [1, 10, 1000] {
            let z = integrate(
                &model,
                &z0,
                &ConditionVec::zeros(),
                IntegrationConfig::new(k).unwrap(),
            )
            .unwrap();
            assert!((z[0] - (z0[0] + a[0])).abs() <= 1e-12, "K={k}");
            assert!((z[1] - (z0[1] + a[1])).abs() <= 1e-12, "K={k}");
        }
    }

    /// Identity field v(tau, c, z) = z as a single linear layer.
    fn identity_field(d: usize) -> VelocityFieldModel {
        let spec = NetSpec::new(alloc::vec![1 + COND_DIM + d, d]).unwrap();
        let mut values = alloc::vec![0.0; spec.param_count()];
        let in_w = 1 + COND_DIM + d;
        for j in 0..d {
            values[j * in_w + 1 + COND_DIM + j] = 1.0;
        }
        VelocityFieldModel {
            net: NetParams::from_values(spec, values).unwrap(),
            conditional: true,
            latent_dim: d,
            default_steps: 10,
        }
    }

    #[test]
    fn linear_field_converges_to_exponential() {
        let model = identity_field(1);
        let cond = ConditionVec::zeros();
        let e = core::f64::consts::E;
        let mut errors = Vec::new();
        for k in [10, 100, 1000] {
            let z = integrate(&model, &[1.0], &cond, IntegrationConfig::new(k).unwrap()).unwrap();
            errors.push((z[0] - e).abs());
        }
        assert!(errors[2] / e < 0.005, "K=1000 error {}", errors[2]);
        assert!(errors[1] < errors[0], "K=100 not better than K=10");
        assert!(errors[2] < errors[1], "K=1000 not better than K=100");
    }

    #[test]
    fn integrate_reports_non_finite_step() {
        // All-positive huge weights: the first product overflows and
        // the rectifier passes the infinity through.
        let mut model = VelocityFieldModel::init(1, 8, false, 3);
        for v in model.net.values_mut() {
            *v = 1e200;
        }
        let err = integrate(
            &model,
            &[1e200],
            &ConditionVec::zeros(),
            IntegrationConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, FlowError::NonFiniteState { step: 0 });
    }

    #[test]
    fn predict_batch_empty_and_step_invariance_for_zero_field() {
        let mut model = VelocityFieldModel::init(2, 8, true, 4);
        for v in model.net.values_mut() {
            *v = 0.0;
        }
        let empty: Vec<LatentPairSample> = Vec::new();
        assert!(predict_batch(&model, &empty, IntegrationConfig::default())
            .unwrap()
            .is_empty());
        let batch = [sample(&[1.0, -1.0], &[0.0, 0.0])];
        let one = predict_batch(&model, &batch, IntegrationConfig::new(1).unwrap()).unwrap();
        let ten = predict_batch(&model, &batch, IntegrationConfig::new(10).unwrap()).unwrap();
        assert_eq!(one, ten);
    }

    #[test]
    fn training_is_deterministic_and_zero_epochs_is_identity() {
        let mut ds = Dataset::new(crate::world::Split::Train, 2);
        let mut r = rng::stream(8, rng::streams::NOISE, 0);
        for _ in 0..64 {
            let z0 = rng::normal_vec(&mut r, 2);
            let z1: Vec<f64> = z0.iter().map(|v| v + 0.5).collect();
            ds.push(sample(&z0, &z1)).unwrap();
        }
        let init = VelocityFieldModel::init(2, 8, true, 1);
        let cfg = FlowTrainConfig {
            epochs: 0,
            batch_size: 16,
            ..Default::default()
        };
        let (same, curve) = train_flow(init.clone(), &ds, &cfg).unwrap();
        assert_eq!(same, init);
        assert!(curve.is_empty());

        let cfg = FlowTrainConfig {
            epochs: 5,
            batch_size: 16,
            seed: 3,
            ..Default::default()
        };
        let (a, curve_a) = train_flow(init.clone(), &ds, &cfg).unwrap();
        let (b, _) = train_flow(init.clone(), &ds, &cfg).unwrap();
        assert_eq!(encode_flow(&a), encode_flow(&b));
        assert!(curve_a.iter().all(|l| l.is_finite()));
        assert!(curve_a.last().unwrap() < &curve_a[0]);
    }

    #[test]
    fn checkpoint_roundtrips_byte_exact() {
        let m = VelocityFieldModel::init(4, 8, false, 9);
        let bytes = encode_flow(&m);
        let back = decode_flow(&bytes).unwrap();
        assert_eq!(encode_flow(&back), bytes);
        assert!(!back.conditional);
        assert_eq!(back.default_steps, 10);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let m = VelocityFieldModel::init(2, 8, true, 9);
        let bytes = encode_flow(&m);
        let mut bad = bytes.clone();
        bad[8] = 7; // conditional flag byte
        assert!(matches!(
            decode_flow(&bad).unwrap_err(),
            CodecError::Invalid(_)
        ));
        let mut short = bytes;
        short.truncate(30);
        assert!(matches!(
            decode_flow(&short).unwrap_err(),
            CodecError::Truncated { .. }
        ));
    }

    // Calibration probe for the toy transport oracle; run on demand:
    // `cargo test -p latflow-core probe_toy -- --ignored --nocapture`
    #[test]
    #[ignore]
    fn probe_toy_cfm_sigma() {
        for sigma in [0.0, 0.005, 0.01] {
            let rep = run_toy_cfm(1, 2000, sigma, 10).unwrap();
            let worst = rep.mean_errors.iter().cloned().fold(0.0, f64::max);
            std::println!(
                "sigma {sigma}: final loss {:.4}, worst mean error {:.4}",
                rep.final_loss,
                worst
            );
        }
    }
}
