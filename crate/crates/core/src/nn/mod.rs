//! Minimal feed-forward network engine: reverse-mode gradients with respect
//! to parameters and inputs, second-order parameter gradients of
//! input-gradient functionals (double backprop for the gradient penalty), an
//! Adam optimizer, and weight-constraint modes.

mod scalar;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;
use rand::Rng;
pub use scalar::{Dual, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Softplus,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply<S: Scalar>(self, a: S) -> S {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Softplus => softplus(a),
            Activation::LeakyRelu { slope } => {
                if a.value() >= 0.0 {
                    a
                } else {
                    S::from_f64(slope) * a
                }
            }
        }
    }

    fn derivative<S: Scalar>(self, a: S) -> S {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                S::one() - t * t
            }
            Activation::Softplus => sigmoid(a),
            Activation::LeakyRelu { slope } => {
                S::from_f64(if a.value() >= 0.0 { 1.0 } else { slope })
            }
        }
    }

    /// Lipschitz constant of the activation.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Tanh | Activation::Softplus => 1.0,
            Activation::LeakyRelu { slope } => slope.abs().max(1.0),
        }
    }
}

fn softplus<S: Scalar>(a: S) -> S {
    // max(a, 0) + ln(1 + exp(-|a|)), branch on the value part.
    if a.value() > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid<S: Scalar>(a: S) -> S {
    if a.value() >= 0.0 {
        S::one() / (S::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (S::one() + e)
    }
}

/// Architecture of a multilayer perceptron: layer widths from input to
/// output, hidden activations, affine final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::validation("need at least input and output widths"));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::validation("layer widths must be positive"));
        }
        Ok(MlpSpec {
            layer_widths,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Offset of layer `l`'s weight block and bias block in the flat vector.
    pub fn layer_offset(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            let (rows, cols) = (self.layer_widths[k + 1], self.layer_widths[k]);
            off += rows * cols + rows;
        }
        let rows = self.layer_widths[l + 1];
        let cols = self.layer_widths[l];
        (off, off + rows * cols)
    }

    pub fn param_count(&self) -> usize {
        (0..self.layer_count())
            .map(|l| {
                let (rows, cols) = (self.layer_widths[l + 1], self.layer_widths[l]);
                rows * cols + rows
            })
            .sum()
    }
}

/// Flat parameter vector laid out layer by layer (weights row-major, then
/// biases).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &MlpSpec) -> Self {
        ParamVector(vec![0.0; spec.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Seed-reproducible initialization: weights uniform in (-a, a) with
/// `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_params(spec: &MlpSpec, seed: RngSeed) -> ParamVector {
    let mut rng = seed.rng();
    let mut values = Vec::with_capacity(spec.param_count());
    for l in 0..spec.layer_count() {
        let (rows, cols) = (spec.layer_widths[l + 1], spec.layer_widths[l]);
        let a = (6.0 / (rows + cols) as f64).sqrt();
        for _ in 0..rows * cols {
            values.push(rng.gen_range(-a..a));
        }
        values.extend(std::iter::repeat(0.0).take(rows));
    }
    ParamVector(values)
}

struct Cache<S> {
    /// Pre-activation vectors per layer.
    pre: Vec<Vec<S>>,
    /// Post-activation vectors per layer (last layer affine: post == pre).
    post: Vec<Vec<S>>,
}

fn forward_cache<S: Scalar>(spec: &MlpSpec, params: &[f64], x: &[S]) -> Cache<S> {
    let layers = spec.layer_count();
    let mut pre = Vec::with_capacity(layers);
    let mut post = Vec::with_capacity(layers);
    let mut z: Vec<S> = x.to_vec();
    for l in 0..layers {
        let (w_off, b_off) = spec.layer_offset(l);
        let (rows, cols) = (spec.layer_widths[l + 1], spec.layer_widths[l]);
        let mut a = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &params[w_off + r * cols..w_off + (r + 1) * cols];
            let mut acc = S::from_f64(params[b_off + r]);
            for (wv, zv) in row.iter().zip(&z) {
                acc = acc + S::from_f64(*wv) * *zv;
            }
            a.push(acc);
        }
        let out: Vec<S> = if l + 1 < layers {
            a.iter().map(|&v| spec.activation.apply(v)).collect()
        } else {
            a.clone()
        };
        pre.push(a);
        post.push(out.clone());
        z = out;
    }
    Cache { pre, post }
}

fn backward_pass<S: Scalar>(
    spec: &MlpSpec,
    params: &[f64],
    x: &[S],
    cache: &Cache<S>,
    cotangent: &[S],
) -> (Vec<S>, Vec<S>) {
    let layers = spec.layer_count();
    let mut grad = vec![S::zero(); spec.param_count()];
    let mut delta: Vec<S> = cotangent.to_vec();
    for l in (0..layers).rev() {
        let (w_off, b_off) = spec.layer_offset(l);
        let (rows, cols) = (spec.layer_widths[l + 1], spec.layer_widths[l]);
        let prev: &[S] = if l == 0 { x } else { &cache.post[l - 1] };
        for r in 0..rows {
            let dr = delta[r];
            let g_row = &mut grad[w_off + r * cols..w_off + (r + 1) * cols];
            for (gv, pv) in g_row.iter_mut().zip(prev) {
                *gv = *gv + dr * *pv;
            }
            grad[b_off + r] = grad[b_off + r] + dr;
        }
        let mut next = vec![S::zero(); cols];
        for r in 0..rows {
            let row = &params[w_off + r * cols..w_off + (r + 1) * cols];
            let dr = delta[r];
            for (nv, wv) in next.iter_mut().zip(row) {
                *nv = *nv + S::from_f64(*wv) * dr;
            }
        }
        if l > 0 {
            for (nv, av) in next.iter_mut().zip(&cache.pre[l - 1]) {
                *nv = *nv * spec.activation.derivative(*av);
            }
        }
        delta = next;
    }
    (grad, delta)
}

/// Plain forward evaluation.
pub fn forward(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim() {
        return Err(Error::validation(format!(
            "input width {} does not match spec input {}",
            x.len(),
            spec.input_dim()
        )));
    }
    if params.len() != spec.param_count() {
        return Err(Error::validation("parameter vector length mismatch"));
    }
    let cache = forward_cache::<f64>(spec, params.as_slice(), x);
    Ok(cache.post.last().unwrap().clone())
}

/// Scalar output of a discriminator-style network.
pub fn forward_scalar(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<f64> {
    if spec.output_dim() != 1 {
        return Err(Error::validation("scalar forward needs output width 1"));
    }
    Ok(forward(spec, params, x)?[0])
}

/// Reverse pass seeded with an arbitrary output cotangent. Returns the
/// parameter gradient and the input gradient of `<cotangent, net(x)>`.
pub fn backward_with_cotangent(
    spec: &MlpSpec,
    params: &ParamVector,
    x: &[f64],
    cotangent: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    if cotangent.len() != spec.output_dim() {
        return Err(Error::validation("cotangent width mismatch"));
    }
    if x.len() != spec.input_dim() {
        return Err(Error::validation("input width mismatch"));
    }
    let cache = forward_cache::<f64>(spec, params.as_slice(), x);
    let (grad, input_grad) = backward_pass(spec, params.as_slice(), x, &cache, cotangent);
    Ok((ParamVector(grad), input_grad))
}

/// Gradient of the scalar output with respect to the input, `grad_x D(x)`.
pub fn grad_input(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    if spec.output_dim() != 1 {
        return Err(Error::validation("input gradient needs output width 1"));
    }
    let (_, g) = backward_with_cotangent(spec, params, x, &[1.0])?;
    Ok(g)
}

/// Parameter gradient of the weighted sum `sum_i coeff_i * D(x_i)`.
///
/// This is the workhorse behind every mean-of-outputs loss: a mean over a
/// batch is the special case `coeff_i = 1/n`.
pub fn weighted_output_grad<'a, I>(
    spec: &MlpSpec,
    params: &ParamVector,
    terms: I,
) -> Result<ParamVector>
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    if spec.output_dim() != 1 {
        return Err(Error::validation("weighted output gradient needs output width 1"));
    }
    let mut grad = vec![0.0; spec.param_count()];
    for (x, coeff) in terms {
        if coeff == 0.0 {
            continue;
        }
        let cache = forward_cache::<f64>(spec, params.as_slice(), x);
        let (g, _) = backward_pass(spec, params.as_slice(), x, &cache, &[coeff]);
        for (acc, gv) in grad.iter_mut().zip(&g) {
            *acc += gv;
        }
    }
    Ok(ParamVector(grad))
}

/// Value and parameter gradient of the mean output over a batch of rows.
pub fn grad_params_mean(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &[&[f64]],
) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let coeff = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    for x in batch {
        value += coeff * forward_scalar(spec, params, x)?;
    }
    if !value.is_finite() {
        return Err(Error::numeric("mean output is not finite"));
    }
    let grad = weighted_output_grad(spec, params, batch.iter().map(|x| (*x, coeff)))?;
    Ok((value, grad))
}

/// Outcome of one gradient-penalty term `(||grad_x D(x)|| - 1)^2`.
#[derive(Debug, Clone)]
pub struct PenaltyGrad {
    pub grad: ParamVector,
    /// The input-gradient norm `||grad_x D(x)||`.
    pub grad_norm: f64,
    /// The penalty value at this point.
    pub value: f64,
    /// Set when the input-gradient norm vanished and the subgradient-zero
    /// convention was applied.
    pub degenerate: bool,
}

/// Parameter gradient of `(||grad_x D(x)|| - 1)^2` for a single point, via
/// forward-over-reverse: a dual-number reverse pass along the direction of
/// the input gradient realises `d/d theta (v . grad_x D)` exactly.
pub fn penalty_param_grad(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<PenaltyGrad> {
    if spec.output_dim() != 1 {
        return Err(Error::validation("penalty needs output width 1"));
    }
    let g = grad_input(spec, params, x)?;
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Ok(PenaltyGrad {
            grad: ParamVector::zeros(spec),
            grad_norm: norm,
            value: (norm - 1.0).powi(2),
            degenerate: true,
        });
    }
    let x_dual: Vec<Dual> = x.iter().zip(&g).map(|(&xv, &gv)| Dual::new(xv, gv)).collect();
    let cache = forward_cache::<Dual>(spec, params.as_slice(), &x_dual);
    let (grad_dual, _) = backward_pass(
        spec,
        params.as_slice(),
        &x_dual,
        &cache,
        &[Dual::constant(1.0)],
    );
    let scale = 2.0 * (norm - 1.0) / norm;
    let grad = grad_dual.iter().map(|d| scale * d.t).collect();
    Ok(PenaltyGrad {
        grad: ParamVector(grad),
        grad_norm: norm,
        value: (norm - 1.0).powi(2),
        degenerate: false,
    })
}

/// Step direction for [`AdamState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepDirection {
    Ascend,
    Descend,
}

/// Adam optimizer configuration and moment state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_num: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, param_count: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::validation("adam betas must lie in [0, 1)"));
        }
        Ok(AdamState {
            lr,
            beta1,
            beta2,
            eps_num: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        })
    }

    /// One bias-corrected Adam update. `Descend` subtracts the step,
    /// `Ascend` adds it.
    pub fn step(
        &mut self,
        params: &mut ParamVector,
        grad: &ParamVector,
        direction: StepDirection,
    ) -> Result<()> {
        if grad.len() != params.len() || grad.len() != self.m.len() {
            return Err(Error::validation("gradient length mismatch"));
        }
        if !grad.is_finite() {
            return Err(Error::numeric("non-finite gradient in adam step"));
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let sign = match direction {
            StepDirection::Ascend => 1.0,
            StepDirection::Descend => -1.0,
        };
        for i in 0..params.len() {
            let g = grad.0[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params.0[i] += sign * self.lr * m_hat / (v_hat.sqrt() + self.eps_num);
        }
        Ok(())
    }
}

/// Weight constraint applied after discriminator updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    None,
    /// Clamp every parameter entry to `[-c, c]`.
    WeightClip { c: f64 },
    /// Rescale each weight-matrix row to L2 norm at most 1; biases untouched.
    RowNormalize,
}

pub fn apply_constraint(mode: ConstraintMode, spec: &MlpSpec, params: &mut ParamVector) {
    match mode {
        ConstraintMode::None => {}
        ConstraintMode::WeightClip { c } => {
            for v in params.0.iter_mut() {
                *v = v.clamp(-c, c);
            }
        }
        ConstraintMode::RowNormalize => {
            for l in 0..spec.layer_count() {
                let (w_off, _) = spec.layer_offset(l);
                let (rows, cols) = (spec.layer_widths[l + 1], spec.layer_widths[l]);
                for r in 0..rows {
                    let row = &mut params.0[w_off + r * cols..w_off + (r + 1) * cols];
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1.0 {
                        for v in row.iter_mut() {
                            *v /= norm;
                        }
                    }
                }
            }
        }
    }
}

/// Spectral norm of a rows x cols matrix by power iteration from a
/// deterministic start vector.
pub fn spectral_norm(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(matrix.len(), rows * cols);
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + 1e-3 * i as f64).collect();
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut sigma = 0.0;
    for _ in 0..200 {
        // u = M v; with ||v|| = 1, ||u|| estimates sigma.
        let mut u = vec![0.0; rows];
        for r in 0..rows {
            u[r] = matrix[r * cols..(r + 1) * cols]
                .iter()
                .zip(&v)
                .map(|(m, x)| m * x)
                .sum();
        }
        let new_sigma = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if new_sigma == 0.0 {
            return 0.0;
        }
        let mut w = vec![0.0; cols];
        for r in 0..rows {
            let ur = u[r];
            for (wc, m) in w.iter_mut().zip(&matrix[r * cols..(r + 1) * cols]) {
                *wc += m * ur;
            }
        }
        let w_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if w_norm == 0.0 {
            return new_sigma;
        }
        v = w.iter().map(|x| x / w_norm).collect();
        if (new_sigma - sigma).abs() <= 1e-13 * new_sigma.max(1.0) {
            return new_sigma;
        }
        sigma = new_sigma;
    }
    sigma
}

/// Global Lipschitz upper bound: product of layer spectral norms times the
/// activation's Lipschitz constant per hidden layer.
pub fn lipschitz_upper_bound(spec: &MlpSpec, params: &ParamVector) -> f64 {
    let mut bound = 1.0;
    for l in 0..spec.layer_count() {
        let (w_off, _) = spec.layer_offset(l);
        let (rows, cols) = (spec.layer_widths[l + 1], spec.layer_widths[l]);
        bound *= spectral_norm(&params.as_slice()[w_off..w_off + rows * cols], rows, cols);
        if l + 1 < spec.layer_count() {
            bound *= spec.activation.lipschitz();
        }
    }
    bound
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"OTLABNN1";

/// Write parameters as flat binary (magic, spec descriptor, little-endian
/// f64s) plus a JSON sidecar of the spec at `<path>.json`.
pub fn save_checkpoint(path: &Path, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    let spec_json = serde_json::to_vec(spec)
        .map_err(|e| Error::numeric(format!("spec serialization failed: {e}")))?;
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
    let io = |e: std::io::Error| Error::ingestion(path.display().to_string(), e.to_string());
    file.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    file.write_all(&(spec_json.len() as u32).to_le_bytes()).map_err(io)?;
    file.write_all(&spec_json).map_err(io)?;
    file.write_all(&(params.len() as u64).to_le_bytes()).map_err(io)?;
    for v in &params.0 {
        file.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    let sidecar = path.with_extension(match path.extension() {
        Some(e) => format!("{}.json", e.to_string_lossy()),
        None => "json".to_string(),
    });
    std::fs::write(&sidecar, &spec_json)
        .map_err(|e| Error::ingestion(sidecar.display().to_string(), e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpSpec, ParamVector)> {
    let display = path.display().to_string();
    let mut file =
        std::fs::File::open(path).map_err(|e| Error::ingestion(display.clone(), e.to_string()))?;
    let io = |e: std::io::Error| Error::ingestion(display.clone(), e.to_string());
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::ingestion(display, "bad checkpoint magic"));
    }
    let mut len4 = [0u8; 4];
    file.read_exact(&mut len4).map_err(io)?;
    let mut spec_json = vec![0u8; u32::from_le_bytes(len4) as usize];
    file.read_exact(&mut spec_json).map_err(io)?;
    let spec: MlpSpec = serde_json::from_slice(&spec_json)
        .map_err(|e| Error::ingestion(display.clone(), format!("bad spec descriptor: {e}")))?;
    let mut len8 = [0u8; 8];
    file.read_exact(&mut len8).map_err(io)?;
    let count = u64::from_le_bytes(len8) as usize;
    if count != spec.param_count() {
        return Err(Error::ingestion(display, "parameter count does not match spec"));
    }
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        file.read_exact(&mut buf).map_err(io)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((spec, ParamVector(values)))
}
