//! Feed-forward network substrate: parameter storage, forward
//! evaluation, exact reverse-mode gradients, an Adam optimizer, and a
//! finite-difference gradient oracle.
//!
//! Networks are plain MLPs: rectified-linear hidden layers, linear
//! output. Parameters live in one flat `f64` vector laid out per layer
//! as row-major weight matrix then bias vector, which is also the
//! checkpoint payload order. Training runs in double precision;
//! checkpoints store 32-bit floats.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float; // float intrinsics without std

use crate::codec::{CodecError, Reader, Writer};
use crate::linalg::{col_sums, matmul_nn, matmul_nt, matmul_tn, Mat};
use crate::rng;

pub const NET_MAGIC: [u8; 4] = *b"LFNN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{what}: expected length {expected}, got {actual}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network spec: {0}")]
    BadSpec(String),
    #[error("non-finite value at index {index} of {what}")]
    NonFinite { what: &'static str, index: usize },
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<(), NnError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NnError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Network shape: layer widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    layer_widths: Vec<usize>,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
}

impl NetSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self, NnError> {
        if layer_widths.len() < 2 {
            return Err(NnError::BadSpec(alloc::format!(
                "need at least 2 layers, got {}",
                layer_widths.len()
            )));
        }
        if let Some(w) = layer_widths.iter().find(|&&w| w == 0) {
            return Err(NnError::BadSpec(alloc::format!("zero layer width {w}")));
        }
        Ok(NetSpec {
            layer_widths,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Linear,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of weight layers (affine transforms).
    pub fn weight_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offset of layer `l`'s weight matrix in the flat vector.
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_widths
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameter vector bound to a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    spec: NetSpec,
    values: Vec<f64>,
}

impl NetParams {
    pub fn zeros(spec: NetSpec) -> Self {
        let n = spec.param_count();
        NetParams {
            spec,
            values: vec![0.0; n],
        }
    }

    /// Uniform Xavier weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
    pub fn init(spec: NetSpec, seed: u64) -> Self {
        let mut p = NetParams::zeros(spec);
        let mut r = rng::stream(seed, rng::streams::INIT, 0);
        for l in 0..p.spec.weight_layers() {
            let fan_in = p.spec.layer_widths[l];
            let fan_out = p.spec.layer_widths[l + 1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (ws, _) = p.layer_ranges(l);
            for v in &mut p.values[ws] {
                *v = rng::next_range(&mut r, -limit, limit);
            }
        }
        p
    }

    pub fn from_values(spec: NetSpec, values: Vec<f64>) -> Result<Self, NnError> {
        if values.len() != spec.param_count() {
            return Err(NnError::DimMismatch {
                what: "parameter vector",
                expected: spec.param_count(),
                actual: values.len(),
            });
        }
        check_finite("parameter vector", &values)?;
        Ok(NetParams { spec, values })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// (weight range, bias range) of layer `l` in the flat vector.
    pub fn layer_ranges(&self, l: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let off = self.spec.layer_offset(l);
        let w = self.spec.layer_widths[l] * self.spec.layer_widths[l + 1];
        let b = self.spec.layer_widths[l + 1];
        (off..off + w, off + w..off + w + b)
    }

    /// Weight matrix of layer `l`, shape `[out x in]` row-major (copies).
    pub fn weight_mat(&self, l: usize) -> Mat {
        let (ws, _) = self.layer_ranges(l);
        Mat::from_vec(
            self.spec.layer_widths[l + 1],
            self.spec.layer_widths[l],
            self.values[ws].to_vec(),
        )
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (_, bs) = self.layer_ranges(l);
        &self.values[bs]
    }

    /// Per-layer (weights, biases) views of the flat vector.
    pub fn to_layers(&self) -> Vec<(Mat, Vec<f64>)> {
        (0..self.spec.weight_layers())
            .map(|l| (self.weight_mat(l), self.bias(l).to_vec()))
            .collect()
    }

    /// Rebuilds the flat vector from per-layer pieces.
    pub fn from_layers(spec: NetSpec, layers: &[(Mat, Vec<f64>)]) -> Result<Self, NnError> {
        if layers.len() != spec.weight_layers() {
            return Err(NnError::DimMismatch {
                what: "layer list",
                expected: spec.weight_layers(),
                actual: layers.len(),
            });
        }
        let mut values = Vec::with_capacity(spec.param_count());
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.rows != spec.layer_widths[l + 1] || w.cols != spec.layer_widths[l] {
                return Err(NnError::DimMismatch {
                    what: "layer weights",
                    expected: spec.layer_widths[l] * spec.layer_widths[l + 1],
                    actual: w.rows * w.cols,
                });
            }
            if b.len() != spec.layer_widths[l + 1] {
                return Err(NnError::DimMismatch {
                    what: "layer biases",
                    expected: spec.layer_widths[l + 1],
                    actual: b.len(),
                });
            }
            values.extend_from_slice(&w.data);
            values.extend_from_slice(b);
        }
        NetParams::from_values(spec, values)
    }
}

/// Post-activation values per layer, kept for the backward pass.
pub struct ForwardTrace {
    /// `activations[0]` is the input batch; last entry is the output.
    pub activations: Vec<Mat>,
    /// Smallest |preactivation| over all rectified units, measured
    /// before clipping. The finite-difference oracle rejects points
    /// where this is comparable to its step: central differences are
    /// invalid within the step of the rectifier's corner.
    pub min_hidden_margin: f64,
}

/// Batched forward pass; rows of `x` are samples.
pub fn batch_forward_trace(params: &NetParams, x: &Mat) -> Result<(Mat, ForwardTrace), NnError> {
    let spec = &params.spec;
    if x.cols != spec.input_width() {
        return Err(NnError::DimMismatch {
            what: "input",
            expected: spec.input_width(),
            actual: x.cols,
        });
    }
    let layers = spec.weight_layers();
    let mut activations = Vec::with_capacity(layers + 1);
    let mut min_margin = f64::INFINITY;
    activations.push(x.clone());
    for l in 0..layers {
        let w = params.weight_mat(l);
        let b = params.bias(l);
        let mut z = matmul_nt(activations.last().unwrap(), &w);
        for i in 0..z.rows {
            for (zv, &bv) in z.row_mut(i).iter_mut().zip(b) {
                *zv += bv;
            }
        }
        if l + 1 < layers {
            for v in &mut z.data {
                min_margin = min_margin.min(v.abs());
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(z);
    }
    let out = activations.last().unwrap().clone();
    Ok((
        out,
        ForwardTrace {
            activations,
            min_hidden_margin: min_margin,
        },
    ))
}

pub fn batch_forward(params: &NetParams, x: &Mat) -> Result<Mat, NnError> {
    Ok(batch_forward_trace(params, x)?.0)
}

/// Single-sample forward pass.
pub fn forward(params: &NetParams, input: &[f64]) -> Result<Vec<f64>, NnError> {
    let out = batch_forward(params, &Mat::from_row(input))?;
    Ok(out.data)
}

/// Batched reverse pass. `output_grad` holds dL/d(output) per row;
/// returns the flat parameter gradient and dL/d(input).
pub fn batch_backward(
    params: &NetParams,
    trace: &ForwardTrace,
    output_grad: &Mat,
) -> Result<(Vec<f64>, Mat), NnError> {
    let spec = &params.spec;
    let layers = spec.weight_layers();
    let last = trace.activations.last().unwrap();
    if output_grad.cols != spec.output_width() || output_grad.rows != last.rows {
        return Err(NnError::DimMismatch {
            what: "output gradient",
            expected: spec.output_width() * last.rows,
            actual: output_grad.cols * output_grad.rows,
        });
    }
    let mut param_grad = vec![0.0; spec.param_count()];
    let mut g = output_grad.clone();
    for l in (0..layers).rev() {
        let a_in = &trace.activations[l];
        // dW = g^T a_in, db = column sums of g
        let dw = matmul_tn(&g, a_in);
        let db = col_sums(&g);
        let (ws, bs) = params.layer_ranges(l);
        param_grad[ws].copy_from_slice(&dw.data);
        param_grad[bs].copy_from_slice(&db);
        // dL/d a_in, masked by the rectifier except at the input
        let w = params.weight_mat(l);
        g = matmul_nn(&g, &w);
        if l > 0 {
            for (gv, &av) in g.data.iter_mut().zip(&a_in.data) {
                if av <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
    }
    Ok((param_grad, g))
}

/// Single-sample exact gradients of `<output, output_grad>`.
pub fn backward(
    params: &NetParams,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let (_, trace) = batch_forward_trace(params, &Mat::from_row(input))?;
    let (pg, ig) = batch_backward(params, &trace, &Mat::from_row(output_grad))?;
    Ok((pg, ig.data))
}

/// Adam state with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        AdamState {
            step_count: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One optimizer step; rejects non-finite gradients naming the index.
pub fn adam_step(
    params: &mut NetParams,
    state: &mut AdamState,
    grad: &[f64],
) -> Result<(), NnError> {
    if grad.len() != params.values.len() {
        return Err(NnError::DimMismatch {
            what: "gradient",
            expected: params.values.len(),
            actual: grad.len(),
        });
    }
    check_finite("gradient", grad)?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (((p, g), m), v) in params
        .values
        .iter_mut()
        .zip(grad)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Central finite differences of a scalar function, one coordinate at a
/// time. This is the independent oracle: it only ever calls `f`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut pt = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = pt[i];
        pt[i] = orig + h;
        let fp = f(&pt);
        pt[i] = orig - h;
        let fm = f(&pt);
        pt[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Central differences restricted to chosen coordinates.
pub fn central_diff_subset<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    coords: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut pt = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = pt[i];
        pt[i] = orig + h;
        let fp = f(&pt);
        pt[i] = orig - h;
        let fm = f(&pt);
        pt[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Relative error with a floor so near-zero pairs compare absolutely.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub pass: bool,
    pub trials: usize,
    pub coords_checked: usize,
}

/// Compares `backward` against central finite differences at random
/// parameter/input points. Points whose smallest rectifier margin is
/// under the kink guard are resampled: central differences are invalid
/// within `h` of the rectifier's corner. For large nets a seeded subset
/// of parameter coordinates is probed; input coordinates are always
/// probed in full.
pub fn grad_check(
    spec: &NetSpec,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let max_param_coords = 200;
    // The probe is linear in every single coordinate while the rectifier
    // pattern holds, so truncation error is zero; the step only has to
    // beat rounding noise. Nets with no rectifiers have no pattern to
    // break, so a much larger step drives rounding noise far down.
    let h = if spec.weight_layers() == 1 {
        0.1
    } else {
        GRAD_CHECK_STEP
    };
    let mut max_rel = 0.0_f64;
    let mut coords_checked = 0;
    for trial in 0..trials {
        let mut r = rng::stream(seed, rng::streams::GRAD_CHECK, trial as u64);
        // Resample until the point is clear of rectifier kinks.
        let mut attempt = 0;
        let (params, input, cotangent) = loop {
            let mut params = NetParams::init(spec.clone(), rng::mix(seed, trial as u64, attempt));
            for l in 0..spec.weight_layers() {
                let (_, bs) = params.layer_ranges(l);
                for v in &mut params.values_mut()[bs] {
                    *v = rng::next_range(&mut r, -0.5, 0.5);
                }
            }
            let input: Vec<f64> = (0..spec.input_width())
                .map(|_| rng::next_range(&mut r, -1.0, 1.0))
                .collect();
            let cotangent: Vec<f64> = (0..spec.output_width())
                .map(|_| rng::next_range(&mut r, -1.0, 1.0))
                .collect();
            let (_, trace) = batch_forward_trace(&params, &Mat::from_row(&input))?;
            if trace.min_hidden_margin > 1e-3 || attempt >= 50 {
                break (params, input, cotangent);
            }
            attempt += 1;
        };

        let (param_grad, input_grad) = backward(&params, &input, &cotangent)?;

        // scalar probe L(theta) = <forward(theta, x), cotangent>
        let spec_c = spec.clone();
        let nparams = spec.param_count();
        let coords: Vec<usize> = if nparams <= max_param_coords {
            (0..nparams).collect()
        } else {
            (0..max_param_coords)
                .map(|_| rng::next_index(&mut r, nparams))
                .collect()
        };
        let fd_params = central_diff_subset(
            |theta: &[f64]| {
                let p = NetParams::from_values(spec_c.clone(), theta.to_vec()).unwrap();
                let y = forward(&p, &input).unwrap();
                y.iter().zip(&cotangent).map(|(a, b)| a * b).sum()
            },
            params.values(),
            &coords,
            h,
        );
        for (&c, &fd) in coords.iter().zip(&fd_params) {
            max_rel = max_rel.max(rel_error(param_grad[c], fd));
        }
        coords_checked += coords.len();

        let fd_input = central_diff(
            |x: &[f64]| {
                let y = forward(&params, x).unwrap();
                y.iter().zip(&cotangent).map(|(a, b)| a * b).sum()
            },
            &input,
            h,
        );
        for (&a, &fd) in input_grad.iter().zip(&fd_input) {
            max_rel = max_rel.max(rel_error(a, fd));
        }
        coords_checked += fd_input.len();
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        pass: max_rel < tolerance,
        trials,
        coords_checked,
    })
}

/// Serializes to the `LFNN` checkpoint layout: magic, version, layer
/// count, widths, activation ids, then the little-endian `f32`
/// parameter vector.
pub fn encode_net(params: &NetParams) -> Vec<u8> {
    let mut w = Writer::new(&NET_MAGIC);
    let spec = params.spec();
    w.put_u32(spec.widths().len() as u32);
    for &width in spec.widths() {
        w.put_u32(width as u32);
    }
    w.put_u8(0); // hidden activation: relu
    w.put_u8(0); // output activation: linear
    for &v in params.values() {
        w.put_f32(v as f32);
    }
    w.finish()
}

pub fn decode_net(bytes: &[u8]) -> Result<NetParams, CodecError> {
    let mut r = Reader::new(bytes, &NET_MAGIC)?;
    let params = decode_net_body(&mut r)?;
    r.expect_end()?;
    Ok(params)
}

/// Decodes the post-magic body; used directly by wrapper formats that
/// embed `LFNN` blocks.
pub(crate) fn decode_net_body(r: &mut Reader<'_>) -> Result<NetParams, CodecError> {
    let nlayers = r.take_u32()? as usize;
    if nlayers < 2 || nlayers > 64 {
        return Err(CodecError::Invalid(alloc::format!(
            "layer count {nlayers} out of range"
        )));
    }
    let mut widths = Vec::with_capacity(nlayers);
    for _ in 0..nlayers {
        widths.push(r.take_u32()? as usize);
    }
    let hidden = r.take_u8()?;
    let output = r.take_u8()?;
    if hidden != 0 {
        return Err(CodecError::Invalid(alloc::format!(
            "unknown hidden activation id {hidden}"
        )));
    }
    if output != 0 {
        return Err(CodecError::Invalid(alloc::format!(
            "unknown output activation id {output}"
        )));
    }
    let spec = NetSpec::new(widths)
        .map_err(|e| CodecError::Invalid(alloc::format!("{e}")))?;
    let mut values = Vec::with_capacity(spec.param_count());
    for _ in 0..spec.param_count() {
        values.push(r.take_f32()? as f64);
    }
    NetParams::from_values(spec, values).map_err(|e| CodecError::Invalid(alloc::format!("{e}")))
}

/// Embeds the full `LFNN` block (including magic) inside a wrapper.
pub(crate) fn encode_net_into(w: &mut Writer, params: &NetParams) {
    w.put_bytes(&encode_net(params));
}

/// Reads an embedded `LFNN` block from a wrapper stream.
pub(crate) fn decode_net_from(r: &mut Reader<'_>) -> Result<NetParams, CodecError> {
    let magic = [r.take_u8()?, r.take_u8()?, r.take_u8()?, r.take_u8()?];
    if magic != NET_MAGIC {
        return Err(CodecError::BadMagic {
            expected: NET_MAGIC,
            found: magic,
        });
    }
    let version = r.take_u32()?;
    if version != crate::codec::FORMAT_VERSION {
        return Err(CodecError::BadVersion {
            expected: crate::codec::FORMAT_VERSION,
            found: version,
        });
    }
    decode_net_body(r)
}
