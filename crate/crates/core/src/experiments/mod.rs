//! Reproducible, seed-stamped experiment protocols: discriminator-oracle
//! quality on static measures, sample complexity with log-log extrapolation,
//! Sinkhorn sample complexity, false minima of the batch distance, the exact
//! Bernoulli gradient-bias enumeration, and 2-D training tracking.

mod persist;
pub mod plot;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clustering::kgm_batch_with;
use crate::error::{Error, Result};
use crate::exact_ot::{batch_w1, exact_w1};
use crate::gan_lab::{
    ctransform_loss, discriminator_update, generator_measure, interpolate_tau, mode_coverage,
    normalized_w1_estimate, train_gan, value_fn, CtransformSupport, EvalConfig, LossKind,
    TrainConfig, TrainRun,
};
use crate::measures::{mean_batch, resample, sample, DistributionSpec, EmpiricalMeasure};
use crate::nn::{init_params, AdamState, MlpSpec};
use crate::rng::RngSeed;

pub use persist::read_raw_csv;

/// Per-series summary: mean, sample std, and normal-approximation 95%
/// confidence half-width, all computed from the sorted raw values so the
/// result is independent of worker scheduling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryStat {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub ci95_half: f64,
}

pub fn summarize(label: &str, values: &[f64]) -> SummaryStat {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = if sorted.len() > 1 {
        sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    SummaryStat {
        label: label.to_string(),
        mean,
        std,
        ci95_half: 1.96 * std / n.sqrt(),
    }
}

/// Least-squares line in log-log space plus extrapolated sample sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// (target error, required n) pairs.
    pub extrapolations: Vec<(f64, f64)>,
}

/// Ordinary least squares on (ln x, ln y); extrapolation solves
/// `ln y* = slope ln n + intercept` for n.
pub fn loglog_fit(xs: &[f64], ys: &[f64], targets: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::validation("log-log fit needs at least 2 (x, y) pairs"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::validation("log-log fit needs positive inputs"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("log-log fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let extrapolations = targets
        .iter()
        .map(|t| (*t, ((t.ln() - intercept) / slope).exp()))
        .collect();
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
        extrapolations,
    })
}

/// Seed-stamped record of one Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub config: serde_json::Value,
    pub seed: RngSeed,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summaries: Vec<SummaryStat>,
    pub fit: Option<LogLogFit>,
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn summary(&self, label: &str) -> Option<&SummaryStat> {
        self.summaries.iter().find(|s| s.label == label)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_values(&self, name: &str) -> Vec<f64> {
        let idx = self.column_index(name).expect("unknown column");
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

/// Cap on exact-LP support sizes inside experiment loops.
pub const LP_SIZE_GUARD: usize = 5000;

/// Monte Carlo curve of `E[W1(p_n, p~_n)]` over sample sizes, with log-log
/// fit and required-n extrapolations for target errors 0.1 and 0.01.
pub fn sample_complexity(
    d: usize,
    sizes: &[usize],
    reps: usize,
    spec: &DistributionSpec,
    seed: RngSeed,
) -> Result<(ExperimentResult, LogLogFit)> {
    if sizes.is_empty() || reps == 0 {
        return Err(Error::validation("need at least one size and repetition"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("sizes must be strictly ascending"));
    }
    let started = std::time::Instant::now();
    let kept: Vec<usize> = sizes.iter().copied().filter(|&n| n <= LP_SIZE_GUARD).collect();
    let skipped: Vec<usize> = sizes.iter().copied().filter(|&n| n > LP_SIZE_GUARD).collect();

    let mut tasks = Vec::new();
    for (si, &n) in kept.iter().enumerate() {
        for rep in 0..reps {
            tasks.push((si, n, rep));
        }
    }
    let rows: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(si, n, rep)| {
            let s = seed.derive((si as u64) << 32 | rep as u64);
            let a = sample(spec, n, s.derive(1))?;
            let b = sample(spec, n, s.derive(2))?;
            Ok(vec![n as f64, rep as f64, batch_w1(&a, &b)?])
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    let mut means = Vec::new();
    for &n in &kept {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] as usize == n)
            .map(|r| r[2])
            .collect();
        let s = summarize(&format!("w1_n{n}"), &vals);
        means.push(s.mean);
        summaries.push(s);
    }
    let xs: Vec<f64> = kept.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&xs, &means, &[0.1, 0.01])?;

    let result = ExperimentResult {
        name: "sample-complexity".to_string(),
        config: json!({
            "d": d, "sizes": sizes, "reps": reps, "spec": spec,
            "skipped_sizes": skipped, "lp_guard": LP_SIZE_GUARD,
        }),
        seed,
        columns: vec!["n".into(), "rep".into(), "w1".into()],
        rows,
        summaries,
        fit: Some(fit.clone()),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((result, fit))
}

/// Same protocol with the Sinkhorn divergence on paired draws: each row has
/// both the divergence and the exact W1 of the same batch pair.
pub fn sinkhorn_complexity(
    d: usize,
    epsilon: f64,
    sizes: &[usize],
    reps: usize,
    seed: RngSeed,
) -> Result<ExperimentResult> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon must be positive"));
    }
    if sizes.is_empty() || reps == 0 {
        return Err(Error::validation("need at least one size and repetition"));
    }
    let started = std::time::Instant::now();
    let spec = DistributionSpec::StandardGaussian { d };
    let params = crate::entropic_ot::SinkhornParams::new(epsilon);
    let kept: Vec<usize> = sizes.iter().copied().filter(|&n| n <= LP_SIZE_GUARD).collect();
    let skipped: Vec<usize> = sizes.iter().copied().filter(|&n| n > LP_SIZE_GUARD).collect();

    let mut tasks = Vec::new();
    for (si, &n) in kept.iter().enumerate() {
        for rep in 0..reps {
            tasks.push((si, n, rep));
        }
    }
    let rows: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(si, n, rep)| {
            let s = seed.derive((si as u64) << 32 | rep as u64);
            let a = sample(&spec, n, s.derive(1))?;
            let b = sample(&spec, n, s.derive(2))?;
            let div = crate::entropic_ot::sinkhorn_divergence(&a, &b, &params)?;
            if !div.all_converged() {
                return Err(Error::numeric(format!(
                    "sinkhorn unconverged at n = {n}, rep {rep}"
                )));
            }
            Ok(vec![n as f64, rep as f64, div.value, batch_w1(&a, &b)?])
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    for &n in &kept {
        let svals: Vec<f64> = rows.iter().filter(|r| r[0] as usize == n).map(|r| r[2]).collect();
        let wvals: Vec<f64> = rows.iter().filter(|r| r[0] as usize == n).map(|r| r[3]).collect();
        let ss = summarize(&format!("sinkhorn_n{n}"), &svals);
        let sw = summarize(&format!("w1_n{n}"), &wvals);
        summaries.push(SummaryStat {
            label: format!("ratio_n{n}"),
            mean: ss.mean / sw.mean,
            std: 0.0,
            ci95_half: 0.0,
        });
        summaries.push(ss);
        summaries.push(sw);
    }

    Ok(ExperimentResult {
        name: "sinkhorn-complexity".to_string(),
        config: json!({
            "d": d, "epsilon": epsilon, "sizes": sizes, "reps": reps,
            "skipped_sizes": skipped,
        }),
        seed,
        columns: vec!["n".into(), "rep".into(), "sinkhorn_divergence".into(), "w1".into()],
        rows,
        summaries,
        fit: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Options for [`false_minima`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FalseMinimaOptions {
    /// Reference sample size used to build the mean and k-medians batches.
    pub reference_n: usize,
    /// Clustering restarts behind the k-medians candidate.
    pub kgm_n_init: usize,
}

impl Default for FalseMinimaOptions {
    fn default() -> Self {
        FalseMinimaOptions {
            reference_n: 1024,
            kgm_n_init: 100,
        }
    }
}

/// Monte Carlo comparison of `E[W1(p_n, .)]` against three fixed candidate
/// batches: a held-out real batch, the repeated-mean batch, and the
/// geometric k-medians projection batch (k = n unless stated).
pub fn false_minima(
    spec: &DistributionSpec,
    n: usize,
    reps: usize,
    k: usize,
    opts: &FalseMinimaOptions,
    seed: RngSeed,
) -> Result<ExperimentResult> {
    if n == 0 || reps == 0 || k == 0 {
        return Err(Error::validation("n, reps and k must be at least 1"));
    }
    if n > LP_SIZE_GUARD {
        return Err(Error::validation(format!("n exceeds the LP guard {LP_SIZE_GUARD}")));
    }
    let started = std::time::Instant::now();

    let reference = sample(spec, opts.reference_n, seed.derive(1))?;
    let real_candidate = sample(spec, n, seed.derive(2))?;
    let mean_candidate = mean_batch(&reference, n)?;
    let kgm_candidate = kgm_batch_with(&reference, k, opts.kgm_n_init, seed.derive(3))?;

    let rows: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let p = sample(spec, n, seed.derive((1 << 32) + rep as u64))?;
            Ok(vec![
                rep as f64,
                batch_w1(&p, &real_candidate)?,
                exact_w1(&p, &mean_candidate)?.value,
                exact_w1(&p, &kgm_candidate)?.value,
            ])
        })
        .collect::<Result<_>>()?;

    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let real = summarize("w1_real_batch", &col(1));
    let mean = summarize("w1_mean_batch", &col(2));
    let kgm = summarize("w1_kgm_batch", &col(3));
    let mut summaries = vec![real.clone(), mean.clone(), kgm.clone()];
    // Pairwise orderings with their own confidence half-widths.
    for (label, x, y) in [
        ("diff_real_minus_mean", 1, 2),
        ("diff_real_minus_kgm", 1, 3),
        ("diff_mean_minus_kgm", 2, 3),
    ] {
        let diffs: Vec<f64> = rows.iter().map(|r| r[x] - r[y]).collect();
        summaries.push(summarize(label, &diffs));
    }

    Ok(ExperimentResult {
        name: "false-minima".to_string(),
        config: json!({
            "spec": spec, "n": n, "reps": reps, "k": k,
            "reference_n": opts.reference_n, "kgm_n_init": opts.kgm_n_init,
        }),
        seed,
        columns: vec!["rep".into(), "w1_real".into(), "w1_mean".into(), "w1_kgm".into()],
        rows,
        summaries,
        fit: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn binomial_pmf(n: usize, theta: f64) -> Vec<f64> {
    // Multiplicative recurrence; exact enough in 64-bit for n <= 64.
    let mut pmf = vec![0.0; n + 1];
    if theta == 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if theta == 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    pmf[0] = (1.0 - theta).powi(n as i32);
    for k in 0..n {
        pmf[k + 1] = pmf[k] * ((n - k) as f64 / (k + 1) as f64) * (theta / (1.0 - theta));
    }
    pmf
}

/// Exact enumeration of the Bernoulli batch-gradient bias and the wrong
/// minimum of the expected sample loss.
///
/// For each grid theta: the exact expectation over `k ~ Bin(n, theta*)` of
/// the subgradient of `|k/n - theta|`, the true gradient of
/// `|theta* - theta|`, their bias, and the exact expected loss. Rows where
/// theta hits a lattice point `k/n` report the subgradient interval and are
/// excluded from bias maxima.
pub fn bernoulli_bias(
    n: usize,
    theta_star: f64,
    theta_grid: &[f64],
    seed: RngSeed,
) -> Result<ExperimentResult> {
    if n == 0 || n > 64 {
        return Err(Error::validation("n must lie in 1..=64 (exact enumeration)"));
    }
    if !(0.0..=1.0).contains(&theta_star) {
        return Err(Error::validation("theta* must lie in [0, 1]"));
    }
    if theta_grid.is_empty() || theta_grid.iter().any(|t| !(0.0 < *t && *t < 1.0)) {
        return Err(Error::validation("grid thetas must lie in (0, 1)"));
    }
    let started = std::time::Instant::now();
    let pmf = binomial_pmf(n, theta_star);

    let mut rows = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let mut expected_loss = 0.0;
        let mut grad_smooth = 0.0;
        let mut tie_mass = 0.0;
        for (k, &p) in pmf.iter().enumerate() {
            let frac = k as f64 / n as f64;
            expected_loss += p * (frac - theta).abs();
            if frac == theta {
                tie_mass += p;
            } else {
                // d/dtheta |frac - theta| = sign(theta - frac)
                grad_smooth += p * (theta - frac).signum();
            }
        }
        let nonsmooth = tie_mass > 0.0;
        let (grad_lo, grad_hi) = (grad_smooth - tie_mass, grad_smooth + tie_mass);
        let true_grad = (theta - theta_star).signum();
        let bias = if nonsmooth {
            f64::NAN
        } else {
            (grad_smooth - true_grad).abs()
        };
        rows.push(vec![
            theta,
            expected_loss,
            grad_lo,
            grad_hi,
            true_grad,
            bias,
            if nonsmooth { 1.0 } else { 0.0 },
            if !nonsmooth && bias >= 2.0 * (-2.0f64).exp() { 1.0 } else { 0.0 },
        ]);
    }

    let theta_bar = rows
        .iter()
        .min_by(|a, b| a[1].partial_cmp(&b[1]).unwrap())
        .map(|r| r[0])
        .unwrap();
    let max_bias = rows
        .iter()
        .filter(|r| r[6] == 0.0)
        .map(|r| r[5])
        .fold(0.0f64, f64::max);
    let summaries = vec![
        SummaryStat {
            label: "theta_bar".into(),
            mean: theta_bar,
            std: 0.0,
            ci95_half: 0.0,
        },
        SummaryStat {
            label: "max_bias_smooth".into(),
            mean: max_bias,
            std: 0.0,
            ci95_half: 0.0,
        },
        SummaryStat {
            label: "theta_bar_differs_from_theta_star".into(),
            mean: if (theta_bar - theta_star).abs() > 1e-12 { 1.0 } else { 0.0 },
            std: 0.0,
            ci95_half: 0.0,
        },
    ];

    Ok(ExperimentResult {
        name: "bernoulli-bias".to_string(),
        config: json!({ "n": n, "theta_star": theta_star, "grid": theta_grid }),
        seed,
        columns: vec![
            "theta".into(),
            "expected_loss".into(),
            "expected_grad_lo".into(),
            "expected_grad_hi".into(),
            "true_grad".into(),
            "bias".into(),
            "nonsmooth".into(),
            "bias_exceeds_bound".into(),
        ],
        rows,
        summaries,
        fit: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo estimate of `E|k/n - theta|`, the independent check on the
/// enumeration.
pub fn bernoulli_loss_monte_carlo(
    n: usize,
    theta_star: f64,
    theta: f64,
    draws: usize,
    seed: RngSeed,
) -> (f64, f64) {
    use rand::Rng;
    let mut rng = seed.rng();
    let mut vals = Vec::with_capacity(draws);
    for _ in 0..draws {
        let k = (0..n).filter(|_| rng.gen::<f64>() < theta_star).count();
        vals.push((k as f64 / n as f64 - theta).abs());
    }
    let s = summarize("mc", &vals);
    (s.mean, s.std / (draws as f64).sqrt())
}

/// Static-measure discriminator training shared by the oracle protocols.
/// Returns the trained parameters and the final inner loss.
fn train_static_discriminator(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    disc_spec: &MlpSpec,
    cfg: &TrainConfig,
    iters: usize,
    full_batch: bool,
    seed: RngSeed,
) -> Result<(crate::nn::ParamVector, Option<f64>)> {
    let mut params = init_params(disc_spec, seed.derive(2));
    let mut adam = AdamState::new(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, disc_spec.param_count())?;
    let mut last = None;
    for it in 0..iters {
        let (real, generated) = if full_batch {
            (a.clone(), b.clone())
        } else {
            (
                resample(a, cfg.batch_n, seed.derive((1 << 40) + it as u64))?,
                resample(b, cfg.batch_n, seed.derive((2 << 40) + it as u64))?,
            )
        };
        let loss = discriminator_update(
            disc_spec,
            &mut params,
            &mut adam,
            cfg,
            &real,
            &generated,
            seed.derive((3 << 40) + it as u64),
        )?;
        last = Some(loss);
    }
    Ok((params, last))
}

fn oracle_static_summary(
    name: &str,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    disc_spec: &MlpSpec,
    params: &crate::nn::ParamVector,
    cfg: &TrainConfig,
    seed: RngSeed,
    iters: usize,
    started: std::time::Instant,
) -> Result<ExperimentResult> {
    // Lipschitz probe: interpolates between paired resamples of the two
    // measures.
    let probe_n = cfg.batch_n.max(256).min(a.len().min(b.len()).max(cfg.batch_n));
    let pa = resample(a, probe_n, seed.derive(11))?;
    let pb = resample(b, probe_n, seed.derive(12))?;
    let tau = interpolate_tau(&pa, &pb, seed.derive(13))?;
    let est = normalized_w1_estimate(disc_spec, params, a, b, &tau)?;
    let lp = exact_w1(a, b)?.value;
    let nl = est.normalized_lower.unwrap_or(f64::NAN);
    let nu = est.normalized_upper.unwrap_or(f64::NAN);
    let rows = vec![vec![
        est.raw,
        nl,
        nu,
        est.lipschitz.lower,
        est.lipschitz.upper,
        lp,
        est.raw / lp,
        nl / lp,
    ]];
    let mk = |label: &str, v: f64| SummaryStat {
        label: label.into(),
        mean: v,
        std: 0.0,
        ci95_half: 0.0,
    };
    let summaries = vec![
        mk("w1_disc_raw", est.raw),
        mk("normalized_lower", nl),
        mk("normalized_upper", nu),
        mk("lipschitz_lower", est.lipschitz.lower),
        mk("lipschitz_upper", est.lipschitz.upper),
        mk("lp_w1", lp),
        mk("ratio_raw_over_lp", est.raw / lp),
        mk("ratio_normalized_over_lp", nl / lp),
    ];
    Ok(ExperimentResult {
        name: name.to_string(),
        config: json!({
            "iters": iters, "batch_n": cfg.batch_n, "loss": cfg.loss_kind,
            "lambda": cfg.lambda, "adam_lr": cfg.adam_lr,
            "disc_spec": disc_spec, "a_len": a.len(), "b_len": b.len(),
        }),
        seed,
        columns: vec![
            "w1_disc_raw".into(),
            "normalized_lower".into(),
            "normalized_upper".into(),
            "lipschitz_lower".into(),
            "lipschitz_upper".into(),
            "lp_w1".into(),
            "ratio_raw_over_lp".into(),
            "ratio_normalized_over_lp".into(),
        ],
        rows,
        summaries,
        fit: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Oracle-quality protocol on static finitely supported measures: N
/// minibatch ascent steps on the discriminator, then the full-measure value
/// estimate is compared against the exact LP distance.
pub fn oracle_static(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    disc_spec: &MlpSpec,
    cfg: &TrainConfig,
    iters: usize,
    seed: RngSeed,
) -> Result<ExperimentResult> {
    let started = std::time::Instant::now();
    if a.len().max(b.len()) > LP_SIZE_GUARD {
        return Err(Error::validation(format!(
            "measure support exceeds LP guard {LP_SIZE_GUARD}"
        )));
    }
    let (params, _) = train_static_discriminator(a, b, disc_spec, cfg, iters, false, seed)?;
    oracle_static_summary("oracle-static", a, b, disc_spec, &params, cfg, seed, iters, started)
}

/// The appendix comparison variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolVariant {
    /// Minibatch ascent, full-measure evaluation.
    Stanczuk,
    /// Full-batch ascent without penalty, full-measure evaluation.
    Pinetz,
    /// Minibatch ascent, then per-minibatch comparison against the LP.
    Mallasto,
}

/// Run one appendix protocol variant on static measures.
///
/// For `Mallasto`, `eval_batches` fresh minibatch pairs are scored: the
/// discriminator's per-batch value estimate against the exact LP value of
/// the same pair; the mean absolute relative deviation is summarized.
pub fn protocol_variant(
    variant: ProtocolVariant,
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    disc_spec: &MlpSpec,
    cfg: &TrainConfig,
    iters: usize,
    eval_batches: usize,
    seed: RngSeed,
) -> Result<ExperimentResult> {
    let started = std::time::Instant::now();
    match variant {
        ProtocolVariant::Stanczuk => {
            let (params, _) = train_static_discriminator(a, b, disc_spec, cfg, iters, false, seed)?;
            oracle_static_summary(
                "protocol-stanczuk",
                a,
                b,
                disc_spec,
                &params,
                cfg,
                seed,
                iters,
                started,
            )
        }
        ProtocolVariant::Pinetz => {
            // Full-batch ascent on the plain value function: no penalty.
            let mut plain = cfg.clone();
            plain.loss_kind = LossKind::WganGp;
            plain.lambda = 0.0;
            let (params, _) = train_static_discriminator(a, b, disc_spec, &plain, iters, true, seed)?;
            oracle_static_summary(
                "protocol-pinetz",
                a,
                b,
                disc_spec,
                &params,
                cfg,
                seed,
                iters,
                started,
            )
        }
        ProtocolVariant::Mallasto => {
            let (params, _) = train_static_discriminator(a, b, disc_spec, cfg, iters, false, seed)?;
            let mut rows = Vec::with_capacity(eval_batches);
            for m in 0..eval_batches {
                let pa = resample(a, cfg.batch_n, seed.derive((5 << 40) + 2 * m as u64))?;
                let pb = resample(b, cfg.batch_n, seed.derive((5 << 40) + 2 * m as u64 + 1))?;
                let estimate = match cfg.loss_kind {
                    LossKind::CTransform { support } => {
                        ctransform_loss(disc_spec, &params, &pa, &pb, support)?
                    }
                    LossKind::WganGp | LossKind::WganClip { .. } => {
                        value_fn(disc_spec, &params, &pa, &pb)?
                    }
                    _ => {
                        return Err(Error::validation(
                            "mallasto protocol needs a Wasserstein-style loss",
                        ))
                    }
                };
                let lp = batch_w1(&pa, &pb)?;
                rows.push(vec![m as f64, estimate, lp, (estimate - lp).abs() / lp]);
            }
            let devs: Vec<f64> = rows.iter().map(|r| r[3]).collect();
            let summaries = vec![summarize("mean_abs_rel_deviation", &devs)];
            Ok(ExperimentResult {
                name: "protocol-mallasto".to_string(),
                config: json!({
                    "iters": iters, "eval_batches": eval_batches, "batch_n": cfg.batch_n,
                    "loss": cfg.loss_kind, "lambda": cfg.lambda, "disc_spec": disc_spec,
                }),
                seed,
                columns: vec!["eval".into(), "estimate".into(), "lp_w1".into(), "abs_rel_dev".into()],
                rows,
                summaries,
                fit: None,
                wall_time_s: started.elapsed().as_secs_f64(),
            })
        }
    }
}

/// Everything [`track_2d_training`] needs beyond a [`TrainConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track2dOptions {
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    /// Ring-mixture parameters of the 2-D target.
    pub modes: usize,
    pub radius: f64,
    pub mode_std: f64,
    /// Evaluate the LP proxy every this many generator iterations.
    pub eval_every: usize,
    /// Evaluation sample size (the protocol's large-sample proxy).
    pub eval_n: usize,
}

impl Default for Track2dOptions {
    fn default() -> Self {
        Track2dOptions {
            gen_hidden: vec![128, 128, 128],
            disc_hidden: vec![128, 128, 128],
            modes: 8,
            radius: 2.0,
            mode_std: 0.05,
            eval_every: 100,
            eval_n: 1000,
        }
    }
}

/// Track a 2-D training run: per-iteration generator loss, Lipschitz lower
/// bound, normalized loss, and (periodically) the exact batch W1 between
/// large fresh samples. Returns the result and the finished run.
pub fn track_2d_training(
    cfg: &TrainConfig,
    opts: &Track2dOptions,
) -> Result<(ExperimentResult, TrainRun)> {
    let started = std::time::Instant::now();
    let target = DistributionSpec::ring_mixture(opts.modes, opts.radius, opts.mode_std);
    let mut widths = vec![cfg.latent_dim];
    widths.extend(&opts.gen_hidden);
    widths.push(2);
    let gen_spec = MlpSpec::new(widths, crate::nn::Activation::Tanh)?;
    let mut widths = vec![2usize];
    widths.extend(&opts.disc_hidden);
    widths.push(1);
    let disc_spec = MlpSpec::new(widths, crate::nn::Activation::Tanh)?;

    let mut cfg = cfg.clone();
    cfg.eval = Some(EvalConfig {
        every: opts.eval_every,
        n: opts.eval_n,
    });
    let run = train_gan(&target, &gen_spec, &disc_spec, &cfg)?;

    let mut rows = Vec::with_capacity(run.log.records.len());
    for r in &run.log.records {
        let lip = r.lipschitz_lower.unwrap_or(f64::NAN);
        let normalized = if lip > 1e-9 { r.gen_loss / lip } else { f64::NAN };
        rows.push(vec![
            r.iteration as f64,
            r.gen_loss,
            lip,
            normalized,
            r.proxy_w1.unwrap_or(f64::NAN),
        ]);
    }

    // Final ratio and mode coverage.
    let final_proxy = run
        .log
        .records
        .iter()
        .rev()
        .find_map(|r| r.proxy_w1)
        .unwrap_or(f64::NAN);
    let final_rec = run.log.records.last();
    let final_normalized = final_rec
        .map(|r| {
            let lip = r.lipschitz_lower.unwrap_or(f64::NAN);
            if lip > 1e-9 {
                r.gen_loss / lip
            } else {
                f64::NAN
            }
        })
        .unwrap_or(f64::NAN);
    let centers: Vec<f64> = match &target {
        DistributionSpec::GaussianMixture { centers, .. } => centers.clone(),
        _ => unreachable!(),
    };
    let samples = generator_measure(
        &gen_spec,
        &run.params,
        cfg.latent_dim,
        opts.eval_n,
        cfg.seed.derive(999),
    )?;
    let coverage = mode_coverage(&centers, 2, &samples);
    let mut summaries = vec![
        SummaryStat {
            label: "final_proxy_w1".into(),
            mean: final_proxy,
            std: 0.0,
            ci95_half: 0.0,
        },
        SummaryStat {
            label: "final_normalized_loss".into(),
            mean: final_normalized,
            std: 0.0,
            ci95_half: 0.0,
        },
        SummaryStat {
            label: "final_ratio_w1_over_normalized".into(),
            mean: final_proxy / final_normalized,
            std: 0.0,
            ci95_half: 0.0,
        },
        SummaryStat {
            label: "max_mode_min_distance".into(),
            mean: coverage.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: 0.0,
            ci95_half: 0.0,
        },
    ];
    for (i, c) in coverage.iter().enumerate() {
        summaries.push(SummaryStat {
            label: format!("mode_{i}_min_distance"),
            mean: *c,
            std: 0.0,
            ci95_half: 0.0,
        });
    }

    let result = ExperimentResult {
        name: "track-2d".to_string(),
        config: json!({
            "cfg": cfg, "opts": opts,
        }),
        seed: cfg.seed,
        columns: vec![
            "iteration".into(),
            "gen_loss".into(),
            "lipschitz_lower".into(),
            "normalized_loss".into(),
            "proxy_w1".into(),
        ],
        rows,
        summaries,
        fit: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((result, run))
}

/// The 8-mode-ring target used by the 2-D protocols, exposed so callers can
/// build paired configurations.
pub fn ring_target(opts: &Track2dOptions) -> DistributionSpec {
    DistributionSpec::ring_mixture(opts.modes, opts.radius, opts.mode_std)
}

/// Convenience: the default c-transform loss (real-batch support).
pub fn ctransform_default() -> LossKind {
    LossKind::CTransform {
        support: CtransformSupport::RealBatch,
    }
}
