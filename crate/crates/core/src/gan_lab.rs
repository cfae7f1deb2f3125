//! Loss vocabulary and training loops: the adversarial value function with
//! gradient penalty, weight clipping, the hard-min c-transform loss, the
//! non-saturating GAN loss, minibatch-Sinkhorn generator training, and
//! Lipschitz-normalized distance estimates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropic_ot::{sinkhorn_divergence, sinkhorn_grad_points, SinkhornParams};
use crate::error::{Error, Result};
use crate::measures::{euclidean, sample, DistributionSpec, EmpiricalMeasure};
use crate::nn::{
    apply_constraint, backward_with_cotangent, forward, forward_scalar, grad_input, init_params,
    lipschitz_upper_bound, penalty_param_grad, weighted_output_grad, AdamState, ConstraintMode,
    MlpSpec, ParamVector, StepDirection,
};
use crate::rng::RngSeed;

/// Which support the hard-min c-transform scans.
///
/// The value functional is
/// `mean_a D + mean_{y ~ b} min_{z in S} (||y - z|| - D(z))`.
/// `RealBatch` sets S to the opposing batch `a` (the convention under which
/// the loss recovers the batch W1 on one-atom instances); `GeneratedBatch`
/// follows the verbatim same-batch form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CtransformSupport {
    RealBatch,
    GeneratedBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    WganGp,
    WganClip { c: f64 },
    CTransform { support: CtransformSupport },
    NsGan,
    MinibatchSinkhorn { epsilon: f64 },
}

/// Full configuration of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Generator updates (N_G).
    pub n_g: usize,
    /// Discriminator updates per generator update (N_D).
    pub n_d: usize,
    /// Gradient-penalty coefficient (lambda).
    pub lambda: f64,
    /// Mini-batch size (n).
    pub batch_n: usize,
    pub loss_kind: LossKind,
    pub constraint: ConstraintMode,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub latent_dim: usize,
    pub seed: RngSeed,
    /// Resample both batches for the generator step (the loop's default);
    /// disabling descends on `-mean D(generated)` alone, which has the same
    /// minimizer but no longer tracks the value function.
    pub resample_generator_batches: bool,
    /// Solve the LP between the generator step's own batches each iteration.
    pub log_batch_w1: bool,
    /// Periodically solve the LP between large fresh samples.
    pub eval: Option<EvalConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Evaluate at iterations divisible by `every` (and at the last one).
    pub every: usize,
    /// Evaluation sample size per side.
    pub n: usize,
}

impl TrainConfig {
    pub fn new(loss_kind: LossKind, seed: RngSeed) -> Self {
        TrainConfig {
            n_g: 1000,
            n_d: 5,
            lambda: 10.0,
            batch_n: 64,
            loss_kind,
            constraint: ConstraintMode::None,
            adam_lr: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            latent_dim: 2,
            seed,
            resample_generator_batches: true,
            log_batch_w1: false,
            eval: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_d == 0 || self.batch_n == 0 || self.latent_dim == 0 {
            return Err(Error::validation("counts must be at least 1"));
        }
        if self.lambda < 0.0 {
            return Err(Error::validation("lambda must be nonnegative"));
        }
        Ok(())
    }
}

/// One generator-iteration row of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Generator loss L_G at this iteration.
    pub gen_loss: f64,
    /// Final discriminator loss of the inner loop (absent without one).
    pub disc_loss: Option<f64>,
    /// Sampled Lipschitz lower bound of the discriminator.
    pub lipschitz_lower: Option<f64>,
    /// LP value between the generator step's training batches.
    pub batch_w1: Option<f64>,
    /// LP value between large fresh evaluation samples.
    pub proxy_w1: Option<f64>,
    /// Set when the update was skipped (unconverged Sinkhorn).
    pub skipped: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// One row per generator iteration, stable column order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
        let io = |e: std::io::Error| Error::ingestion(path.display().to_string(), e.to_string());
        writeln!(
            f,
            "iteration,gen_loss,disc_loss,lipschitz_lower,batch_w1,proxy_w1,skipped,wall_time_s"
        )
        .map_err(io)?;
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.gen_loss,
                opt(&r.disc_loss),
                opt(&r.lipschitz_lower),
                opt(&r.batch_w1),
                opt(&r.proxy_w1),
                r.skipped,
                r.wall_time_s
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Result of a training run. `diverged_at` marks an abort on non-finite
/// loss; the parameters then hold the last finite state for checkpointing.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: ParamVector,
    pub log: TrainLog,
    pub diverged_at: Option<usize>,
}

/// Sampled lower and certified upper bound on the discriminator's Lipschitz
/// constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub lower: f64,
    pub upper: f64,
}

/// `mean_a D - mean_b D` under the measures' weights.
pub fn value_fn(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<f64> {
    let mut v = 0.0;
    for (x, &w) in a.iter_points().zip(a.weights()) {
        v += w * forward_scalar(spec, params, x)?;
    }
    for (y, &w) in b.iter_points().zip(b.weights()) {
        v -= w * forward_scalar(spec, params, y)?;
    }
    Ok(v)
}

fn value_fn_disc_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<(f64, ParamVector)> {
    let value = value_fn(spec, params, a, b)?;
    let terms = a
        .iter_points()
        .zip(a.weights().iter().copied())
        .chain(b.iter_points().zip(b.weights().iter().map(|w| -w)));
    let grad = weighted_output_grad(spec, params, terms)?;
    Ok((value, grad))
}

/// Points drawn uniformly on the segments joining paired batch rows.
pub fn interpolate_tau(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    seed: RngSeed,
) -> Result<EmpiricalMeasure> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::validation("interpolation needs batches of equal shape"));
    }
    use rand::Rng;
    let mut rng = seed.rng();
    let d = a.dim();
    let mut points = Vec::with_capacity(a.len() * d);
    for i in 0..a.len() {
        let t: f64 = rng.gen();
        let (x, y) = (a.point(i), b.point(i));
        points.extend(x.iter().zip(y).map(|(xv, yv)| t * xv + (1.0 - t) * yv));
    }
    EmpiricalMeasure::uniform(points, d)
}

/// Mean of `(||grad_x D(x)|| - 1)^2` over the batch.
pub fn gradient_penalty(
    spec: &MlpSpec,
    params: &ParamVector,
    tau: &EmpiricalMeasure,
) -> Result<f64> {
    let mut total = 0.0;
    for x in tau.iter_points() {
        let g = grad_input(spec, params, x)?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        total += (norm - 1.0).powi(2);
    }
    Ok(total / tau.len() as f64)
}

fn gradient_penalty_disc_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    tau: &EmpiricalMeasure,
) -> Result<(f64, ParamVector)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; spec.param_count()];
    let coeff = 1.0 / tau.len() as f64;
    for x in tau.iter_points() {
        let pg = penalty_param_grad(spec, params, x)?;
        value += coeff * pg.value;
        for (acc, g) in grad.iter_mut().zip(&pg.grad.0) {
            *acc += coeff * g;
        }
    }
    Ok((value, ParamVector(grad)))
}

/// Sampled max input-gradient norm (lower bound) and spectral-product upper
/// bound on the discriminator's Lipschitz constant.
pub fn lipschitz_bounds(
    spec: &MlpSpec,
    params: &ParamVector,
    tau: &EmpiricalMeasure,
) -> Result<LipschitzEstimate> {
    let mut lower: f64 = 0.0;
    for x in tau.iter_points() {
        let g = grad_input(spec, params, x)?;
        lower = lower.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(LipschitzEstimate {
        lower,
        upper: lipschitz_upper_bound(spec, params),
    })
}

/// Value-function estimate with its Lipschitz normalizations. Normalized
/// entries are `None` when the corresponding denominator sits under the
/// 1e-9 floor.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedW1Estimate {
    pub raw: f64,
    pub lipschitz: LipschitzEstimate,
    /// raw / sampled-lower-bound: the normalized Wasserstein estimate.
    pub normalized_lower: Option<f64>,
    /// raw / certified-upper-bound: a lower bound on the batch W1.
    pub normalized_upper: Option<f64>,
}

pub fn normalized_w1_estimate(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    tau: &EmpiricalMeasure,
) -> Result<NormalizedW1Estimate> {
    let raw = value_fn(spec, params, a, b)?;
    let lipschitz = lipschitz_bounds(spec, params, tau)?;
    let div = |d: f64| if d < 1e-9 { None } else { Some(raw / d) };
    Ok(NormalizedW1Estimate {
        raw,
        lipschitz,
        normalized_lower: div(lipschitz.lower),
        normalized_upper: div(lipschitz.upper),
    })
}

fn ctransform_support<'a>(
    support: CtransformSupport,
    a: &'a EmpiricalMeasure,
    b: &'a EmpiricalMeasure,
) -> &'a EmpiricalMeasure {
    match support {
        CtransformSupport::RealBatch => a,
        CtransformSupport::GeneratedBatch => b,
    }
}

/// Hard-min c-transform loss:
/// `mean_a D + mean_{y ~ b} min_{z in S} (||y - z|| - D(z))`.
pub fn ctransform_loss(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    support: CtransformSupport,
) -> Result<f64> {
    Ok(ctransform_parts(spec, params, a, b, support)?.0)
}

/// Returns (value, per-y argmin indices into the support).
fn ctransform_parts(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    support: CtransformSupport,
) -> Result<(f64, Vec<usize>)> {
    let s = ctransform_support(support, a, b);
    let d_on_s: Vec<f64> = s
        .iter_points()
        .map(|z| forward_scalar(spec, params, z))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    for (x, &w) in a.iter_points().zip(a.weights()) {
        value += w * forward_scalar(spec, params, x)?;
    }
    let mut argmins = Vec::with_capacity(b.len());
    for (y, &w) in b.iter_points().zip(b.weights()) {
        let (best, best_v) = s
            .iter_points()
            .enumerate()
            .map(|(j, z)| (j, euclidean(y, z) - d_on_s[j]))
            .min_by(|(_, u), (_, v)| u.partial_cmp(v).unwrap())
            .ok_or_else(|| Error::validation("empty c-transform support"))?;
        value += w * best_v;
        argmins.push(best);
    }
    Ok((value, argmins))
}

fn ctransform_disc_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    support: CtransformSupport,
) -> Result<(f64, ParamVector)> {
    let (value, argmins) = ctransform_parts(spec, params, a, b, support)?;
    let s = ctransform_support(support, a, b);
    // D shows up with +w on a's atoms and -w_y on each selected support atom.
    let mut coeff_s = vec![0.0; s.len()];
    for (y_idx, &j) in argmins.iter().enumerate() {
        coeff_s[j] -= b.weights()[y_idx];
    }
    let terms = a
        .iter_points()
        .zip(a.weights().iter().copied())
        .chain(
            s.iter_points()
                .zip(coeff_s.iter().copied())
                .filter(|(_, c)| *c != 0.0),
        );
    let grad = weighted_output_grad(spec, params, terms)?;
    Ok((value, grad))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn guarded_ln(p: f64) -> f64 {
    p.max(1e-12).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct NsGanLosses {
    pub disc_loss: f64,
    pub gen_loss: f64,
}

/// Non-saturating GAN losses; the raw discriminator output is squashed
/// through a logistic inside the loss.
pub fn nsgan_losses(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<NsGanLosses> {
    let mut disc_loss = 0.0;
    let mut gen_loss = 0.0;
    for (x, &w) in a.iter_points().zip(a.weights()) {
        let p = sigmoid(forward_scalar(spec, params, x)?);
        disc_loss -= w * guarded_ln(p);
    }
    for (y, &w) in b.iter_points().zip(b.weights()) {
        let p = sigmoid(forward_scalar(spec, params, y)?);
        disc_loss -= w * guarded_ln(1.0 - p);
        gen_loss -= w * guarded_ln(p);
    }
    Ok(NsGanLosses { disc_loss, gen_loss })
}

fn nsgan_disc_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<(f64, ParamVector)> {
    let losses = nsgan_losses(spec, params, a, b)?;
    // d/dz of -ln sigma(z) is sigma(z) - 1; of -ln(1 - sigma(z)) is sigma(z).
    let mut terms: Vec<(&[f64], f64)> = Vec::with_capacity(a.len() + b.len());
    for (x, &w) in a.iter_points().zip(a.weights()) {
        let p = sigmoid(forward_scalar(spec, params, x)?);
        terms.push((x, w * (p - 1.0)));
    }
    for (y, &w) in b.iter_points().zip(b.weights()) {
        let p = sigmoid(forward_scalar(spec, params, y)?);
        terms.push((y, w * p));
    }
    let grad = weighted_output_grad(spec, params, terms)?;
    Ok((losses.disc_loss, grad))
}

/// Push a latent batch through the generator.
pub fn generator_forward(
    gen_spec: &MlpSpec,
    gen_params: &ParamVector,
    latents: &EmpiricalMeasure,
) -> Result<EmpiricalMeasure> {
    let d_out = gen_spec.output_dim();
    let mut points = Vec::with_capacity(latents.len() * d_out);
    for z in latents.iter_points() {
        points.extend(forward(gen_spec, gen_params, z)?);
    }
    EmpiricalMeasure::uniform(points, d_out)
}

/// Sample the generator's output distribution.
pub fn generator_measure(
    gen_spec: &MlpSpec,
    gen_params: &ParamVector,
    latent_dim: usize,
    n: usize,
    seed: RngSeed,
) -> Result<EmpiricalMeasure> {
    let latents = sample(&DistributionSpec::StandardGaussian { d: latent_dim }, n, seed)?;
    generator_forward(gen_spec, gen_params, &latents)
}

/// Chain per-sample output cotangents through the generator and accumulate
/// the parameter gradient.
fn generator_chain_grad(
    gen_spec: &MlpSpec,
    gen_params: &ParamVector,
    latents: &EmpiricalMeasure,
    cotangents: &[Vec<f64>],
) -> Result<ParamVector> {
    let mut grad = vec![0.0; gen_spec.param_count()];
    for (z, cot) in latents.iter_points().zip(cotangents) {
        let (g, _) = backward_with_cotangent(gen_spec, gen_params, z, cot)?;
        for (acc, gv) in grad.iter_mut().zip(&g.0) {
            *acc += gv;
        }
    }
    Ok(ParamVector(grad))
}

struct SeedStreams {
    seed: RngSeed,
    real: u64,
    latent: u64,
    tau: u64,
    eval: u64,
}

impl SeedStreams {
    fn new(seed: RngSeed) -> Self {
        SeedStreams {
            seed,
            real: 0,
            latent: 0,
            tau: 0,
            eval: 0,
        }
    }

    fn next_real(&mut self) -> RngSeed {
        self.real += 1;
        self.seed.derive((1 << 32) + self.real)
    }

    fn next_latent(&mut self) -> RngSeed {
        self.latent += 1;
        self.seed.derive((2 << 32) + self.latent)
    }

    fn next_tau(&mut self) -> RngSeed {
        self.tau += 1;
        self.seed.derive((3 << 32) + self.tau)
    }

    fn next_eval(&mut self) -> RngSeed {
        self.eval += 1;
        self.seed.derive((4 << 32) + self.eval)
    }
}

/// One discriminator update on explicit batches (ascent or descent per the
/// loss kind, then constraints). The static-measure protocols drive this
/// directly with resampled batches.
pub fn discriminator_update(
    disc_spec: &MlpSpec,
    disc_params: &mut ParamVector,
    disc_adam: &mut AdamState,
    cfg: &TrainConfig,
    real: &EmpiricalMeasure,
    generated: &EmpiricalMeasure,
    tau_seed: RngSeed,
) -> Result<f64> {
    let (loss, grad, direction, clip) = match cfg.loss_kind {
        LossKind::WganGp => {
            let (v, v_grad) = value_fn_disc_grad(disc_spec, disc_params, real, generated)?;
            if cfg.lambda == 0.0 {
                (v, v_grad, StepDirection::Ascend, None)
            } else {
                let tau = interpolate_tau(real, generated, tau_seed)?;
                let (r, r_grad) = gradient_penalty_disc_grad(disc_spec, disc_params, &tau)?;
                let grad = ParamVector(
                    v_grad
                        .0
                        .iter()
                        .zip(&r_grad.0)
                        .map(|(a, b)| a - cfg.lambda * b)
                        .collect(),
                );
                (v - cfg.lambda * r, grad, StepDirection::Ascend, None)
            }
        }
        LossKind::WganClip { c } => {
            let (v, grad) = value_fn_disc_grad(disc_spec, disc_params, real, generated)?;
            (v, grad, StepDirection::Ascend, Some(ConstraintMode::WeightClip { c }))
        }
        LossKind::CTransform { support } => {
            let (v, grad) = ctransform_disc_grad(disc_spec, disc_params, real, generated, support)?;
            (v, grad, StepDirection::Ascend, None)
        }
        LossKind::NsGan => {
            let (v, grad) = nsgan_disc_grad(disc_spec, disc_params, real, generated)?;
            (v, grad, StepDirection::Descend, None)
        }
        LossKind::MinibatchSinkhorn { .. } => {
            return Err(Error::validation(
                "minibatch-sinkhorn training has no discriminator",
            ));
        }
    };
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite discriminator loss"));
    }
    disc_adam.step(disc_params, &grad, direction)?;
    if let Some(mode) = clip {
        apply_constraint(mode, disc_spec, disc_params);
    }
    apply_constraint(cfg.constraint, disc_spec, disc_params);
    Ok(loss)
}

/// Generator loss and its parameter gradient for the adversarial losses.
fn gen_step_grad(
    disc_spec: &MlpSpec,
    disc_params: &ParamVector,
    gen_spec: &MlpSpec,
    gen_params: &ParamVector,
    cfg: &TrainConfig,
    real: &EmpiricalMeasure,
    latents: &EmpiricalMeasure,
) -> Result<(f64, ParamVector)> {
    let generated = generator_forward(gen_spec, gen_params, latents)?;
    let n = generated.len();
    let w = 1.0 / n as f64;
    match cfg.loss_kind {
        LossKind::WganGp | LossKind::WganClip { .. } => {
            let loss = if cfg.resample_generator_batches {
                value_fn(disc_spec, disc_params, real, &generated)?
            } else {
                -(0..n)
                    .map(|j| forward_scalar(disc_spec, disc_params, generated.point(j)))
                    .sum::<Result<f64>>()?
                    * w
            };
            // Only -mean D(G(z)) depends on theta.
            let mut cotangents = Vec::with_capacity(n);
            for j in 0..n {
                let gd = grad_input(disc_spec, disc_params, generated.point(j))?;
                cotangents.push(gd.iter().map(|v| -w * v).collect());
            }
            let grad = generator_chain_grad(gen_spec, gen_params, latents, &cotangents)?;
            Ok((loss, grad))
        }
        LossKind::CTransform { support } => {
            let (loss, argmins) =
                ctransform_parts(disc_spec, disc_params, real, &generated, support)?;
            let s = ctransform_support(support, real, &generated);
            // d/dy of min_z (||y - z|| - D(z)) is the unit vector from z* to y.
            let mut cotangents: Vec<Vec<f64>> = vec![vec![0.0; generated.dim()]; n];
            for (j, &zi) in argmins.iter().enumerate() {
                let y = generated.point(j);
                let z = s.point(zi);
                let dist = euclidean(y, z);
                if dist > 1e-12 {
                    for k in 0..generated.dim() {
                        cotangents[j][k] += w * (y[k] - z[k]) / dist;
                    }
                }
            }
            if support == CtransformSupport::GeneratedBatch {
                // The selected atoms are generated points too: the distance
                // term pulls them toward y and -D(z*) contributes its input
                // gradient.
                for (j, &zi) in argmins.iter().enumerate() {
                    let y = generated.point(j);
                    let z = s.point(zi);
                    let dist = euclidean(y, z);
                    if dist > 1e-12 {
                        for k in 0..generated.dim() {
                            cotangents[zi][k] -= w * (y[k] - z[k]) / dist;
                        }
                    }
                    let gd = grad_input(disc_spec, disc_params, z)?;
                    for k in 0..generated.dim() {
                        cotangents[zi][k] -= w * gd[k];
                    }
                }
            }
            let grad = generator_chain_grad(gen_spec, gen_params, latents, &cotangents)?;
            Ok((loss, grad))
        }
        LossKind::NsGan => {
            let losses = nsgan_losses(disc_spec, disc_params, real, &generated)?;
            let mut cotangents = Vec::with_capacity(n);
            for j in 0..n {
                let y = generated.point(j);
                let p = sigmoid(forward_scalar(disc_spec, disc_params, y)?);
                let coeff = w * (p - 1.0); // d/dz of -ln sigma(z)
                let gd = grad_input(disc_spec, disc_params, y)?;
                cotangents.push(gd.iter().map(|v| coeff * v).collect());
            }
            let grad = generator_chain_grad(gen_spec, gen_params, latents, &cotangents)?;
            Ok((losses.gen_loss, grad))
        }
        LossKind::MinibatchSinkhorn { .. } => unreachable!("handled by train_minibatch_sinkhorn"),
    }
}

/// Adversarial training loop: `n_d` discriminator steps on fresh batches,
/// then one generator step, repeated `n_g` times. Deterministic under the
/// config seed.
pub fn train_gan(
    target: &DistributionSpec,
    gen_spec: &MlpSpec,
    disc_spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    if matches!(cfg.loss_kind, LossKind::MinibatchSinkhorn { .. }) {
        return Err(Error::validation(
            "use train_minibatch_sinkhorn for the discriminator-free loss",
        ));
    }
    if gen_spec.input_dim() != cfg.latent_dim {
        return Err(Error::validation("generator input must match latent_dim"));
    }
    if disc_spec.output_dim() != 1 {
        return Err(Error::validation("discriminator output must be scalar"));
    }

    let mut streams = SeedStreams::new(cfg.seed);
    let mut gen_params = init_params(gen_spec, cfg.seed.derive(1));
    let mut disc_params = init_params(disc_spec, cfg.seed.derive(2));
    let mut gen_adam = AdamState::new(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, gen_spec.param_count())?;
    let mut disc_adam =
        AdamState::new(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, disc_spec.param_count())?;
    let mut log = TrainLog::default();
    let started = std::time::Instant::now();

    for iter in 0..cfg.n_g {
        let mut last_disc_loss = None;
        for _ in 0..cfg.n_d {
            let real = sample(target, cfg.batch_n, streams.next_real())?;
            let latents = sample(
                &DistributionSpec::StandardGaussian { d: cfg.latent_dim },
                cfg.batch_n,
                streams.next_latent(),
            )?;
            let generated = generator_forward(gen_spec, &gen_params, &latents)?;
            let tau_seed = streams.next_tau();
            match discriminator_update(
                disc_spec,
                &mut disc_params,
                &mut disc_adam,
                cfg,
                &real,
                &generated,
                tau_seed,
            ) {
                Ok(loss) => last_disc_loss = Some(loss),
                Err(Error::Numeric(msg)) => {
                    log.records.push(TrainRecord {
                        iteration: iter,
                        gen_loss: f64::NAN,
                        disc_loss: last_disc_loss,
                        lipschitz_lower: None,
                        batch_w1: None,
                        proxy_w1: None,
                        skipped: true,
                        wall_time_s: started.elapsed().as_secs_f64(),
                    });
                    let _ = msg;
                    return Ok(TrainRun {
                        params: gen_params,
                        log,
                        diverged_at: Some(iter),
                    });
                }
                Err(e) => return Err(e),
            }
        }

        // Generator step on fresh batches.
        let real = sample(target, cfg.batch_n, streams.next_real())?;
        let latents = sample(
            &DistributionSpec::StandardGaussian { d: cfg.latent_dim },
            cfg.batch_n,
            streams.next_latent(),
        )?;
        let (gen_loss, grad) = gen_step_grad(
            disc_spec,
            &disc_params,
            gen_spec,
            &gen_params,
            cfg,
            &real,
            &latents,
        )?;
        if !gen_loss.is_finite() {
            return Ok(TrainRun {
                params: gen_params,
                log,
                diverged_at: Some(iter),
            });
        }
        gen_adam.step(&mut gen_params, &grad, StepDirection::Descend)?;

        let generated = generator_forward(gen_spec, &gen_params, &latents)?;
        let tau = interpolate_tau(&real, &generated, streams.next_tau())?;
        let lip = lipschitz_bounds(disc_spec, &disc_params, &tau)?;
        let batch_w1 = if cfg.log_batch_w1 {
            Some(crate::exact_ot::batch_w1(&real, &generated)?)
        } else {
            None
        };
        let proxy_w1 = match &cfg.eval {
            Some(ev) if iter % ev.every == 0 || iter + 1 == cfg.n_g => {
                let big_real = sample(target, ev.n, streams.next_eval())?;
                let big_gen = generator_measure(
                    gen_spec,
                    &gen_params,
                    cfg.latent_dim,
                    ev.n,
                    streams.next_eval(),
                )?;
                Some(crate::exact_ot::batch_w1(&big_real, &big_gen)?)
            }
            _ => None,
        };
        log.records.push(TrainRecord {
            iteration: iter,
            gen_loss,
            disc_loss: last_disc_loss,
            lipschitz_lower: Some(lip.lower),
            batch_w1,
            proxy_w1,
            skipped: false,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainRun {
        params: gen_params,
        log,
        diverged_at: None,
    })
}

/// Discriminator-free training: the generator descends the minibatch
/// Sinkhorn divergence between a real batch and its output, differentiated
/// through the converged potentials.
pub fn train_minibatch_sinkhorn(
    target: &DistributionSpec,
    gen_spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    let epsilon = match cfg.loss_kind {
        LossKind::MinibatchSinkhorn { epsilon } => epsilon,
        _ => {
            return Err(Error::validation(
                "train_minibatch_sinkhorn needs the MinibatchSinkhorn loss",
            ))
        }
    };
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon must be positive"));
    }
    if gen_spec.input_dim() != cfg.latent_dim {
        return Err(Error::validation("generator input must match latent_dim"));
    }

    let params_sink = SinkhornParams::new(epsilon);
    let mut streams = SeedStreams::new(cfg.seed);
    let mut gen_params = init_params(gen_spec, cfg.seed.derive(1));
    let mut adam = AdamState::new(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, gen_spec.param_count())?;
    let mut log = TrainLog::default();
    let mut skipped = 0usize;
    let started = std::time::Instant::now();

    for iter in 0..cfg.n_g {
        let real = sample(target, cfg.batch_n, streams.next_real())?;
        let latents = sample(
            &DistributionSpec::StandardGaussian { d: cfg.latent_dim },
            cfg.batch_n,
            streams.next_latent(),
        )?;
        let generated = generator_forward(gen_spec, &gen_params, &latents)?;
        let div = sinkhorn_divergence(&real, &generated, &params_sink)?;
        let skip = !div.all_converged();
        if skip {
            skipped += 1;
            if 10 * skipped > cfg.n_g.max(10) {
                return Err(Error::numeric(format!(
                    "sinkhorn failed to converge in {skipped} of {} iterations",
                    iter + 1
                )));
            }
        } else {
            let flat = sinkhorn_grad_points(&real, &generated, &params_sink)?;
            let d = generated.dim();
            let cotangents: Vec<Vec<f64>> =
                (0..generated.len()).map(|j| flat[j * d..(j + 1) * d].to_vec()).collect();
            let grad = generator_chain_grad(gen_spec, &gen_params, &latents, &cotangents)?;
            if !div.value.is_finite() {
                return Ok(TrainRun {
                    params: gen_params,
                    log,
                    diverged_at: Some(iter),
                });
            }
            adam.step(&mut gen_params, &grad, StepDirection::Descend)?;
        }
        let proxy_w1 = match &cfg.eval {
            Some(ev) if iter % ev.every == 0 || iter + 1 == cfg.n_g => {
                let big_real = sample(target, ev.n, streams.next_eval())?;
                let big_gen = generator_measure(
                    gen_spec,
                    &gen_params,
                    cfg.latent_dim,
                    ev.n,
                    streams.next_eval(),
                )?;
                Some(crate::exact_ot::batch_w1(&big_real, &big_gen)?)
            }
            _ => None,
        };
        log.records.push(TrainRecord {
            iteration: iter,
            gen_loss: div.value,
            disc_loss: None,
            lipschitz_lower: None,
            batch_w1: None,
            proxy_w1,
            skipped: skip,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainRun {
        params: gen_params,
        log,
        diverged_at: None,
    })
}

/// Minimum distance from each mixture mode center to any of `samples`'
/// points; the coverage oracle asks for one hit within 3 sigma per mode.
pub fn mode_coverage(
    centers: &[f64],
    dim: usize,
    samples: &EmpiricalMeasure,
) -> Vec<f64> {
    centers
        .chunks(dim)
        .map(|c| {
            samples
                .iter_points()
                .map(|p| euclidean(c, p))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ot::brute_force_w1;

    fn disc_affine(w: &[f64], b: f64) -> (MlpSpec, ParamVector) {
        let spec = MlpSpec::new(vec![w.len(), 1], crate::nn::Activation::Tanh).unwrap();
        let mut params = w.to_vec();
        params.push(b);
        (spec, ParamVector(params))
    }

    fn gauss(d: usize, n: usize, stream: u64) -> EmpiricalMeasure {
        sample(&DistributionSpec::StandardGaussian { d }, n, RngSeed::new(55, stream)).unwrap()
    }

    #[test]
    fn value_fn_identical_batches_zero() {
        let (spec, params) = disc_affine(&[1.0, -2.0], 0.3);
        let a = gauss(2, 10, 0);
        assert!(value_fn(&spec, &params, &a, &a).unwrap().abs() < 1e-15);
    }

    #[test]
    fn value_fn_affine_two_diracs() {
        let (spec, params) = disc_affine(&[2.0, -1.0], 0.7);
        let a = EmpiricalMeasure::dirac(&[1.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[0.0, 3.0]).unwrap();
        // w . (x - y) = 2*(1-0) + (-1)*(1-3) = 4
        assert!((value_fn(&spec, &params, &a, &b).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn value_fn_scales_with_final_layer() {
        let spec = MlpSpec::new(vec![2, 4, 1], crate::nn::Activation::Tanh).unwrap();
        let params = init_params(&spec, RngSeed::new(3, 0));
        let a = gauss(2, 6, 1);
        let b = gauss(2, 6, 2);
        let base = value_fn(&spec, &params, &a, &b).unwrap();
        let mut scaled = params.clone();
        let (w_off, _) = spec.layer_offset(1);
        for v in scaled.0[w_off..].iter_mut() {
            *v *= 10.0;
        }
        let big = value_fn(&spec, &scaled, &a, &b).unwrap();
        assert!((big - 10.0 * base).abs() < 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn tau_endpoints_and_degenerate_pairs() {
        let a = gauss(2, 5, 3);
        let tau = interpolate_tau(&a, &a, RngSeed::new(4, 0)).unwrap();
        for (t, x) in tau.iter_points().zip(a.iter_points()) {
            assert!(euclidean(t, x) < 1e-15);
        }
    }

    #[test]
    fn tau_mean_is_half() {
        let a = EmpiricalMeasure::uniform(vec![0.0; 100_000], 1).unwrap();
        let b = EmpiricalMeasure::uniform(vec![1.0; 100_000], 1).unwrap();
        let tau = interpolate_tau(&a, &b, RngSeed::new(5, 0)).unwrap();
        let mean: f64 = tau.points_flat().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 0.5).abs() < 0.01, "mean t = {mean}");
    }

    #[test]
    fn penalty_affine_unit_and_three() {
        let (spec, params) = disc_affine(&[0.6, 0.8], 0.0);
        let tau = gauss(2, 4, 6);
        assert!(gradient_penalty(&spec, &params, &tau).unwrap() < 1e-15);
        let (spec3, params3) = disc_affine(&[3.0, 0.0], 0.0);
        let p = gradient_penalty(&spec3, &params3, &tau).unwrap();
        assert!((p - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_bounds_affine_coincide() {
        let (spec, params) = disc_affine(&[3.0, 4.0], 1.0);
        let tau = gauss(2, 5, 7);
        let est = lipschitz_bounds(&spec, &params, &tau).unwrap();
        assert!((est.lower - 5.0).abs() < 1e-12);
        assert!((est.upper - 5.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_estimate_tight_on_two_diracs() {
        // D = distance-direction potential: w = (x - y)/||x - y||.
        let x = [2.0, 1.0];
        let y = [-1.0, -3.0];
        let diff = [x[0] - y[0], x[1] - y[1]];
        let norm = euclidean(&x, &y);
        let (spec, params) = disc_affine(&[diff[0] / norm, diff[1] / norm], 0.0);
        let a = EmpiricalMeasure::dirac(&x).unwrap();
        let b = EmpiricalMeasure::dirac(&y).unwrap();
        let tau = interpolate_tau(&a, &b, RngSeed::new(8, 0)).unwrap();
        let est = normalized_w1_estimate(&spec, &params, &a, &b, &tau).unwrap();
        assert!((est.raw - norm).abs() < 1e-12);
        assert!((est.normalized_lower.unwrap() - norm).abs() < 1e-12);
        assert!((est.normalized_upper.unwrap() - norm).abs() < 1e-12);
    }

    #[test]
    fn normalized_estimate_invariant_under_scaling() {
        let spec = MlpSpec::new(vec![2, 8, 1], crate::nn::Activation::Tanh).unwrap();
        let params = init_params(&spec, RngSeed::new(9, 0));
        let a = gauss(2, 8, 8);
        let b = gauss(2, 8, 9);
        let tau = interpolate_tau(&a, &b, RngSeed::new(9, 1)).unwrap();
        let base = normalized_w1_estimate(&spec, &params, &a, &b, &tau).unwrap();
        for k in [0.1, 3.0, 100.0] {
            let mut scaled = params.clone();
            let (w_off, _) = spec.layer_offset(1);
            for v in scaled.0[w_off..].iter_mut() {
                *v *= k;
            }
            let est = normalized_w1_estimate(&spec, &scaled, &a, &b, &tau).unwrap();
            let rel = |p: f64, q: f64| (p - q).abs() / q.abs().max(1e-12);
            assert!(rel(est.raw, k * base.raw) < 1e-12);
            assert!(rel(est.lipschitz.lower, k * base.lipschitz.lower) < 1e-12);
            assert!(rel(est.lipschitz.upper, k * base.lipschitz.upper) < 1e-12);
            assert!(
                rel(est.normalized_lower.unwrap(), base.normalized_lower.unwrap()) < 1e-9
            );
            assert!(
                rel(est.normalized_upper.unwrap(), base.normalized_upper.unwrap()) < 1e-9
            );
        }
    }

    #[test]
    fn ctransform_one_atom_matches_brute_force() {
        let a = EmpiricalMeasure::dirac(&[0.5, -1.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[2.0, 1.5]).unwrap();
        let (spec, params) = disc_affine(&[0.0, 0.0], 0.0);
        let loss =
            ctransform_loss(&spec, &params, &a, &b, CtransformSupport::RealBatch).unwrap();
        let w1 = brute_force_w1(&a, &b).unwrap();
        assert!((loss.abs() - w1).abs() < 1e-12);
        assert!((loss - w1).abs() < 1e-12, "weak-duality sign: loss equals +W1");
    }

    #[test]
    fn ctransform_identical_batches_nonpositive() {
        let spec = MlpSpec::new(vec![2, 6, 1], crate::nn::Activation::Tanh).unwrap();
        for s in 0..10 {
            let params = init_params(&spec, RngSeed::new(10, s));
            let a = gauss(2, 6, 20 + s);
            let loss =
                ctransform_loss(&spec, &params, &a, &a, CtransformSupport::RealBatch).unwrap();
            assert!(loss <= 1e-12, "loss {loss} should be <= 0 on a = b");
        }
        // Constant discriminator: equality.
        let (spec_c, params_c) = disc_affine(&[0.0, 0.0], 5.0);
        let a = gauss(2, 6, 30);
        let loss =
            ctransform_loss(&spec_c, &params_c, &a, &a, CtransformSupport::RealBatch).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn ctransform_constant_shift_invariant() {
        let spec = MlpSpec::new(vec![2, 5, 1], crate::nn::Activation::Tanh).unwrap();
        let params = init_params(&spec, RngSeed::new(11, 0));
        let a = gauss(2, 7, 40);
        let b = gauss(2, 7, 41);
        let base = ctransform_loss(&spec, &params, &a, &b, CtransformSupport::RealBatch).unwrap();
        let mut shifted = params.clone();
        let last = shifted.0.len() - 1; // final bias
        shifted.0[last] += 12.5;
        let moved =
            ctransform_loss(&spec, &shifted, &a, &b, CtransformSupport::RealBatch).unwrap();
        assert!((base - moved).abs() < 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn nsgan_losses_at_zero_discriminator() {
        let spec = MlpSpec::new(vec![2, 3, 1], crate::nn::Activation::Tanh).unwrap();
        let params = ParamVector::zeros(&spec);
        let a = gauss(2, 5, 50);
        let b = gauss(2, 5, 51);
        let l = nsgan_losses(&spec, &params, &a, &b).unwrap();
        assert!((l.disc_loss - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l.gen_loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nsgan_separating_discriminator_drives_loss_down() {
        // Affine D with a huge margin separates the shifted batches.
        let (spec, params) = disc_affine(&[50.0], 0.0);
        let a = EmpiricalMeasure::uniform(vec![1.0, 1.1, 0.9], 1).unwrap();
        let b = EmpiricalMeasure::uniform(vec![-1.0, -1.1, -0.9], 1).unwrap();
        let l = nsgan_losses(&spec, &params, &a, &b).unwrap();
        assert!(l.disc_loss < 1e-6);
    }

    #[test]
    fn nsgan_nonsaturating_gradient_alive_when_saturating_dies() {
        // sigma(D) ~ 0 on generated points: the non-saturating loss keeps a
        // unit-scale slope while log(1 - sigma) flattens to zero.
        let z = -20.0f64;
        let h = 1e-4;
        let nonsat = |v: f64| -(sigmoid(v).max(1e-12)).ln();
        let sat = |v: f64| (1.0 - sigmoid(v)).max(1e-12).ln();
        let g_nonsat = (nonsat(z + h) - nonsat(z - h)) / (2.0 * h);
        let g_sat = (sat(z + h) - sat(z - h)) / (2.0 * h);
        assert!(g_nonsat.abs() > 0.99);
        assert!(g_sat.abs() < 1e-6);
    }

    #[test]
    fn train_gan_zero_iterations() {
        let gen_spec = MlpSpec::new(vec![2, 4, 2], crate::nn::Activation::Tanh).unwrap();
        let disc_spec = MlpSpec::new(vec![2, 4, 1], crate::nn::Activation::Tanh).unwrap();
        let mut cfg = TrainConfig::new(LossKind::WganGp, RngSeed::new(1, 0));
        cfg.n_g = 0;
        let run = train_gan(&DistributionSpec::StandardGaussian { d: 2 }, &gen_spec, &disc_spec, &cfg)
            .unwrap();
        assert!(run.log.records.is_empty());
        assert_eq!(run.params, init_params(&gen_spec, cfg.seed.derive(1)));
    }

    #[test]
    fn train_gan_is_bit_reproducible() {
        let gen_spec = MlpSpec::new(vec![2, 8, 2], crate::nn::Activation::Tanh).unwrap();
        let disc_spec = MlpSpec::new(vec![2, 8, 1], crate::nn::Activation::Tanh).unwrap();
        let mut cfg = TrainConfig::new(LossKind::WganGp, RngSeed::new(7, 3));
        cfg.n_g = 5;
        cfg.n_d = 2;
        cfg.batch_n = 8;
        let target = DistributionSpec::ring_mixture(8, 2.0, 0.05);
        let a = train_gan(&target, &gen_spec, &disc_spec, &cfg).unwrap();
        let b = train_gan(&target, &gen_spec, &disc_spec, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let la: Vec<f64> = a.log.records.iter().map(|r| r.gen_loss).collect();
        let lb: Vec<f64> = b.log.records.iter().map(|r| r.gen_loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn train_gan_lambda_zero_matches_penalty_free_updates() {
        // With lambda = 0 the penalty contributes exactly zero: the whole
        // run must match a WganClip run with an enormous (inactive) clip.
        let gen_spec = MlpSpec::new(vec![2, 6, 2], crate::nn::Activation::Tanh).unwrap();
        let disc_spec = MlpSpec::new(vec![2, 6, 1], crate::nn::Activation::Tanh).unwrap();
        let target = DistributionSpec::StandardGaussian { d: 2 };
        let mut cfg = TrainConfig::new(LossKind::WganGp, RngSeed::new(9, 1));
        cfg.n_g = 4;
        cfg.n_d = 2;
        cfg.batch_n = 8;
        cfg.lambda = 0.0;
        let gp = train_gan(&target, &gen_spec, &disc_spec, &cfg).unwrap();
        let mut cfg_clip = cfg.clone();
        cfg_clip.loss_kind = LossKind::WganClip { c: 1e18 };
        let clip = train_gan(&target, &gen_spec, &disc_spec, &cfg_clip).unwrap();
        assert_eq!(gp.params, clip.params);
    }

    #[test]
    fn minibatch_sinkhorn_stationary_on_own_samples() {
        // Real batch equal to the generated batch: the divergence is exactly
        // zero and the chained generator gradient vanishes, so an update
        // step leaves the parameters untouched.
        let gen_spec = MlpSpec::new(vec![2, 6, 2], crate::nn::Activation::Tanh).unwrap();
        let gen_params = init_params(&gen_spec, RngSeed::new(11, 0));
        let latents = gauss(2, 16, 60);
        let generated = generator_forward(&gen_spec, &gen_params, &latents).unwrap();
        let params_sink = SinkhornParams::new(0.5);
        let div = sinkhorn_divergence(&generated, &generated, &params_sink).unwrap();
        assert!(div.value.abs() < 1e-12);
        let flat = sinkhorn_grad_points(&generated, &generated, &params_sink).unwrap();
        let cotangents: Vec<Vec<f64>> =
            (0..16).map(|j| flat[j * 2..(j + 1) * 2].to_vec()).collect();
        let grad = generator_chain_grad(&gen_spec, &gen_params, &latents, &cotangents).unwrap();
        let mut updated = gen_params.clone();
        let mut adam = AdamState::new(1e-3, 0.5, 0.9, gen_spec.param_count()).unwrap();
        adam.step(&mut updated, &grad, StepDirection::Descend).unwrap();
        let drift: f64 = updated
            .0
            .iter()
            .zip(&gen_params.0)
            .map(|(u, p)| (u - p).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "parameter drift {drift}");
    }

    #[test]
    fn minibatch_sinkhorn_runs_and_logs() {
        let gen_spec = MlpSpec::new(vec![2, 6, 2], crate::nn::Activation::Tanh).unwrap();
        let mut cfg = TrainConfig::new(
            LossKind::MinibatchSinkhorn { epsilon: 0.5 },
            RngSeed::new(11, 0),
        );
        cfg.n_g = 10;
        cfg.batch_n = 16;
        cfg.adam_lr = 1e-3;
        let target = DistributionSpec::StandardGaussian { d: 2 };
        let run = train_minibatch_sinkhorn(&target, &gen_spec, &cfg).unwrap();
        assert_eq!(run.log.records.len(), 10);
        assert!(run.diverged_at.is_none());
    }

    #[test]
    fn mode_coverage_reports_distances() {
        let centers = vec![0.0, 0.0, 10.0, 0.0];
        let samples = EmpiricalMeasure::uniform(vec![0.1, 0.0, 3.0, 3.0], 2).unwrap();
        let cov = mode_coverage(&centers, 2, &samples);
        assert!((cov[0] - 0.1).abs() < 1e-12);
        assert!((cov[1] - euclidean(&[10.0, 0.0], &[3.0, 3.0])).abs() < 1e-12);
    }
}
