//! Entropy-regularized optimal transport: the regularized cost, the debiased
//! divergence, the soft (c, eps)-transform, and gradients of the divergence
//! with respect to support points.
//!
//! The soft transform here is the inf-convention one,
//! `T(f)(x) = -eps * log sum_j w_j exp((f_j - ||x - y_j||) / eps)`,
//! which tends to `min_j (||x - y_j|| - f_j)` as `eps -> 0` and is the form
//! under which the alternating potential updates are exactly transform
//! applications and weak duality holds. The sup-convention mirror
//! `max_j (f_j - ||x - y_j||)` is `-T(-f)(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_ot::{cost_matrix, CostMatrix};
use crate::measures::{euclidean, EmpiricalMeasure};

/// Knobs for the alternating iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SinkhornParams {
    /// Regularization strength, in the same units as the cost.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Convergence threshold on the L1 marginal violation.
    pub tol: f64,
    /// Run in the log domain (safe for small epsilon). The plain-domain fast
    /// path is only reliable when epsilon is not tiny relative to the costs.
    pub log_domain: bool,
}

impl SinkhornParams {
    pub fn new(epsilon: f64) -> Self {
        SinkhornParams {
            epsilon,
            max_iter: 10_000,
            tol: 1e-6,
            log_domain: true,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn plain_domain(mut self) -> Self {
        self.log_domain = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::validation("epsilon must be positive and finite"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Converged (or not) dual potentials plus convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct SinkhornState {
    pub potential_f: Vec<f64>,
    pub potential_g: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Final L1 marginal violation, max over the two marginals.
    pub marginal_error: f64,
    /// Violation after each sweep.
    pub marginal_error_trace: Vec<f64>,
}

fn logsumexp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// The coupling implied by potentials: `gamma_ij = a_i b_j exp((f_i + g_j - C_ij)/eps)`.
pub fn plan_from_potentials(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    f: &[f64],
    g: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = a[i] * b[j] * ((f[i] + g[j] - cost.get(i, j)) / epsilon).exp();
        }
    }
    plan
}

fn marginal_error(plan: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut row_err = 0.0;
    for i in 0..n {
        let s: f64 = plan[i * m..(i + 1) * m].iter().sum();
        row_err += (s - a[i]).abs();
    }
    let mut col_err = 0.0;
    for j in 0..m {
        let s: f64 = (0..n).map(|i| plan[i * m + j]).sum();
        col_err += (s - b[j]).abs();
    }
    row_err.max(col_err)
}

fn iterate_log_domain(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    params: &SinkhornParams,
) -> SinkhornState {
    let (n, m) = (a.len(), b.len());
    let eps = params.epsilon;
    let ln_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let ln_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < params.max_iter {
        sweeps += 1;
        for i in 0..n {
            f[i] = -eps * logsumexp((0..m).map(|j| ln_b[j] + (g[j] - cost.get(i, j)) / eps));
        }
        for j in 0..m {
            g[j] = -eps * logsumexp((0..n).map(|i| ln_a[i] + (f[i] - cost.get(i, j)) / eps));
        }
        let plan = plan_from_potentials(a, b, cost, &f, &g, eps);
        let err = marginal_error(&plan, a, b);
        trace.push(err);
        if err <= params.tol {
            converged = true;
            break;
        }
    }

    let marginal_error = *trace.last().unwrap_or(&f64::INFINITY);
    SinkhornState {
        potential_f: f,
        potential_g: g,
        iterations_used: sweeps,
        converged,
        marginal_error,
        marginal_error_trace: trace,
    }
}

fn iterate_plain_domain(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    params: &SinkhornParams,
) -> Result<SinkhornState> {
    let (n, m) = (a.len(), b.len());
    let eps = params.epsilon;
    let mut kernel = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            kernel[i * m + j] = (-cost.get(i, j) / eps).exp();
        }
    }
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < params.max_iter {
        sweeps += 1;
        for i in 0..n {
            let s: f64 = (0..m).map(|j| b[j] * kernel[i * m + j] * v[j]).sum();
            u[i] = 1.0 / s;
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| a[i] * kernel[i * m + j] * u[i]).sum();
            v[j] = 1.0 / s;
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::numeric(
                "plain-domain scaling under/overflowed; rerun with log_domain",
            ));
        }
        let f: Vec<f64> = u.iter().map(|x| eps * x.ln()).collect();
        let g: Vec<f64> = v.iter().map(|x| eps * x.ln()).collect();
        let plan = plan_from_potentials(a, b, cost, &f, &g, eps);
        let err = marginal_error(&plan, a, b);
        trace.push(err);
        if err <= params.tol {
            converged = true;
            break;
        }
    }

    let f: Vec<f64> = u.iter().map(|x| eps * x.ln()).collect();
    let g: Vec<f64> = v.iter().map(|x| eps * x.ln()).collect();
    let marginal_error = *trace.last().unwrap_or(&f64::INFINITY);
    Ok(SinkhornState {
        potential_f: f,
        potential_g: g,
        iterations_used: sweeps,
        converged,
        marginal_error,
        marginal_error_trace: trace,
    })
}

/// Regularized transport cost `W_{1,eps}`: transport term plus
/// `eps * KL(plan | a (x) b)`, both evaluated at the computed plan.
///
/// Non-convergence within `max_iter` is reported through the state, not an
/// error; the caller decides what to do with an unconverged value.
pub fn sinkhorn_cost(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    params: &SinkhornParams,
) -> Result<(f64, SinkhornState)> {
    params.validate()?;
    let cost = cost_matrix(a, b, 1.0)?;
    let state = if params.log_domain {
        iterate_log_domain(a.weights(), b.weights(), &cost, params)
    } else {
        iterate_plain_domain(a.weights(), b.weights(), &cost, params)?
    };
    if state
        .potential_f
        .iter()
        .chain(state.potential_g.iter())
        .any(|x| !x.is_finite())
    {
        return Err(Error::numeric("sinkhorn potentials are not finite"));
    }
    let plan = plan_from_potentials(
        a.weights(),
        b.weights(),
        &cost,
        &state.potential_f,
        &state.potential_g,
        params.epsilon,
    );
    let transport: f64 = plan.iter().zip(cost.entries()).map(|(g, c)| g * c).sum();
    // KL(gamma | a (x) b) with gamma from potentials reduces to
    // sum gamma_ij (f_i + g_j - C_ij) / eps.
    let mut kl = 0.0;
    let m = b.len();
    for i in 0..a.len() {
        for j in 0..m {
            kl += plan[i * m + j]
                * (state.potential_f[i] + state.potential_g[j] - cost.get(i, j));
        }
    }
    kl /= params.epsilon;
    Ok((transport + params.epsilon * kl, state))
}

/// The three regularized costs behind one divergence evaluation.
#[derive(Debug, Clone)]
pub struct SinkhornDivergence {
    pub value: f64,
    pub cross: f64,
    pub self_a: f64,
    pub self_b: f64,
    pub states: [SinkhornState; 3],
}

impl SinkhornDivergence {
    pub fn all_converged(&self) -> bool {
        self.states.iter().all(|s| s.converged)
    }
}

/// Debiased divergence `S_{1,eps}(a,b) = W_{1,eps}(a,b) - (W_{1,eps}(a,a) + W_{1,eps}(b,b)) / 2`.
pub fn sinkhorn_divergence(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    params: &SinkhornParams,
) -> Result<SinkhornDivergence> {
    let (cross, s_ab) = sinkhorn_cost(a, b, params)?;
    let (self_a, s_aa) = sinkhorn_cost(a, a, params)?;
    let (self_b, s_bb) = sinkhorn_cost(b, b, params)?;
    Ok(SinkhornDivergence {
        value: cross - 0.5 * (self_a + self_b),
        cross,
        self_a,
        self_b,
        states: [s_ab, s_aa, s_bb],
    })
}

/// Soft (c, eps)-transform of `f` against a weighted support, evaluated at `x`:
/// `-eps * log sum_j w_j exp((f_j - ||x - y_j||) / eps)`.
pub fn ceps_transform(
    f: &[f64],
    support: &EmpiricalMeasure,
    x: &[f64],
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon must be positive"));
    }
    if f.len() != support.len() {
        return Err(Error::validation(format!(
            "potential has {} entries for a support of {}",
            f.len(),
            support.len()
        )));
    }
    if x.len() != support.dim() {
        return Err(Error::validation("point dimension mismatch"));
    }
    let w = support.weights();
    let value = -epsilon
        * logsumexp(
            (0..support.len())
                .map(|j| w[j].ln() + (f[j] - euclidean(x, support.point(j))) / epsilon),
        );
    Ok(value)
}

fn unit_direction(from: &[f64], to: &[f64]) -> Vec<f64> {
    let d = euclidean(from, to);
    if d < 1e-300 {
        return vec![0.0; from.len()];
    }
    to.iter().zip(from).map(|(t, f)| (t - f) / d).collect()
}

/// Gradient of `S_{1,eps}(a, b)` with respect to the points of `b`, from the
/// converged dual potentials (envelope form). Returns a flat n x d buffer
/// matching `b`'s layout.
pub fn sinkhorn_grad_points(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    params: &SinkhornParams,
) -> Result<Vec<f64>> {
    let d = b.dim();
    let cost_ab = cost_matrix(a, b, 1.0)?;
    let cost_bb = cost_matrix(b, b, 1.0)?;
    let (_, st_ab) = sinkhorn_cost(a, b, params)?;
    let (_, st_bb) = sinkhorn_cost(b, b, params)?;
    if !st_ab.converged || !st_bb.converged {
        return Err(Error::numeric(format!(
            "sinkhorn did not converge (cross err {:.3e}, self err {:.3e}); \
             refusing to differentiate an unconverged state",
            st_ab.marginal_error, st_bb.marginal_error
        )));
    }
    let plan_ab = plan_from_potentials(
        a.weights(),
        b.weights(),
        &cost_ab,
        &st_ab.potential_f,
        &st_ab.potential_g,
        params.epsilon,
    );
    let plan_bb = plan_from_potentials(
        b.weights(),
        b.weights(),
        &cost_bb,
        &st_bb.potential_f,
        &st_bb.potential_g,
        params.epsilon,
    );

    let (n, m) = (a.len(), b.len());
    let mut grad = vec![0.0; m * d];
    // d/dy_j <plan_ab, C> = sum_i gamma_ij (y_j - x_i)/||y_j - x_i||.
    for j in 0..m {
        for i in 0..n {
            let g = plan_ab[i * m + j];
            if g == 0.0 {
                continue;
            }
            let dir = unit_direction(a.point(i), b.point(j));
            for k in 0..d {
                grad[j * d + k] += g * dir[k];
            }
        }
    }
    // Self term: y_j appears in both slots of W(b,b); the two contributions
    // are equal by plan symmetry, and S subtracts half of their sum.
    for j in 0..m {
        for i in 0..m {
            let g = plan_bb[i * m + j];
            if g == 0.0 || i == j {
                continue;
            }
            let dir = unit_direction(b.point(i), b.point(j));
            for k in 0..d {
                grad[j * d + k] -= g * dir[k];
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ot::exact_w1;
    use crate::measures::{sample, DistributionSpec};
    use crate::rng::RngSeed;

    fn gauss(d: usize, n: usize, stream: u64) -> EmpiricalMeasure {
        sample(&DistributionSpec::StandardGaussian { d }, n, RngSeed::new(99, stream)).unwrap()
    }

    #[test]
    fn single_atom_pair_is_zero() {
        let a = EmpiricalMeasure::dirac(&[1.0, 2.0]).unwrap();
        let (v, st) = sinkhorn_cost(&a, &a, &SinkhornParams::new(0.5)).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(st.converged);
    }

    #[test]
    fn small_eps_close_to_exact_w1() {
        let a = gauss(2, 16, 0);
        let b = gauss(2, 16, 1);
        let mean_cost = cost_matrix(&a, &b, 1.0).unwrap().mean();
        let params = SinkhornParams::new(1e-3 * mean_cost)
            .with_tol(1e-4)
            .with_max_iter(150_000);
        let div = sinkhorn_divergence(&a, &b, &params).unwrap();
        assert!(div.all_converged());
        let w1 = exact_w1(&a, &b).unwrap().value;
        let rel = (div.value - w1).abs() / w1;
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn huge_eps_gives_product_plan() {
        // Plan entries deviate from the product measure by O(C/eps).
        let a = gauss(2, 6, 2);
        let b = gauss(2, 6, 3);
        let params = SinkhornParams::new(1e8).with_tol(1e-10);
        let (_, st) = sinkhorn_cost(&a, &b, &params).unwrap();
        let cost = cost_matrix(&a, &b, 1.0).unwrap();
        let plan = plan_from_potentials(
            a.weights(),
            b.weights(),
            &cost,
            &st.potential_f,
            &st.potential_g,
            params.epsilon,
        );
        let transport: f64 = plan.iter().zip(cost.entries()).map(|(g, c)| g * c).sum();
        let mut independent = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                independent += a.weights()[i] * b.weights()[j] * cost.get(i, j);
                let product = a.weights()[i] * b.weights()[j];
                assert!((plan[i * 6 + j] - product).abs() < 1e-8);
            }
        }
        assert!((transport - independent).abs() < 1e-6);
    }

    #[test]
    fn divergence_of_identical_measure_is_zero() {
        for (i, eps) in [0.01, 0.1, 1.0, 10.0, 100.0].iter().enumerate() {
            let a = gauss(3, 10, 10 + i as u64);
            let div = sinkhorn_divergence(&a, &a, &SinkhornParams::new(*eps)).unwrap();
            assert!(div.value.abs() < 1e-8, "eps {eps}: {}", div.value);
        }
    }

    #[test]
    fn divergence_is_symmetric() {
        let a = gauss(2, 9, 20);
        let b = gauss(2, 9, 21);
        let params = SinkhornParams::new(0.3).with_tol(1e-9);
        let ab = sinkhorn_divergence(&a, &b, &params).unwrap().value;
        let ba = sinkhorn_divergence(&b, &a, &params).unwrap().value;
        assert!((ab - ba).abs() < 1e-8);
    }

    #[test]
    fn plain_domain_matches_log_domain_at_moderate_eps() {
        let a = gauss(2, 8, 30);
        let b = gauss(2, 8, 31);
        let eps = cost_matrix(&a, &b, 1.0).unwrap().median();
        let log = sinkhorn_cost(&a, &b, &SinkhornParams::new(eps).with_tol(1e-10)).unwrap().0;
        let plain = sinkhorn_cost(&a, &b, &SinkhornParams::new(eps).with_tol(1e-10).plain_domain())
            .unwrap()
            .0;
        assert!((log - plain).abs() < 1e-8);
    }

    #[test]
    fn marginal_error_is_monotone() {
        let a = gauss(2, 12, 40);
        let b = gauss(2, 12, 41);
        let params = SinkhornParams::new(0.05).with_tol(1e-10).with_max_iter(5000);
        let (_, st) = sinkhorn_cost(&a, &b, &params).unwrap();
        assert!(st.iterations_used > 3);
        for w in st.marginal_error_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "trace not monotone: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ceps_single_atom() {
        let support = EmpiricalMeasure::dirac(&[1.0, 0.0]).unwrap();
        let x = [4.0, 4.0];
        for eps in [0.01, 1.0, 50.0] {
            let v = ceps_transform(&[0.7], &support, &x, eps).unwrap();
            assert!((v - (5.0 - 0.7)).abs() < 1e-10, "eps {eps}: {v}");
        }
    }

    #[test]
    fn ceps_tends_to_hard_min() {
        let support = gauss(2, 12, 50);
        let f: Vec<f64> = (0..12).map(|i| (i as f64) * 0.05).collect();
        let x = [0.3, -0.2];
        let eps = 1e-4;
        let soft = ceps_transform(&f, &support, &x, eps).unwrap();
        let hard = (0..12)
            .map(|j| euclidean(&x, support.point(j)) - f[j])
            .fold(f64::INFINITY, f64::min);
        assert!((soft - hard).abs() < eps * (12f64).ln() + 1e-9);
    }

    #[test]
    fn ceps_shift_equivariance() {
        let support = gauss(2, 7, 60);
        let x = [0.0, 1.0];
        let f = vec![0.2; 7];
        let shifted: Vec<f64> = f.iter().map(|v| v + 3.0).collect();
        let base = ceps_transform(&f, &support, &x, 0.5).unwrap();
        let moved = ceps_transform(&shifted, &support, &x, 0.5).unwrap();
        assert!((moved - (base - 3.0)).abs() < 1e-10);
    }

    #[test]
    fn ceps_rejects_bad_epsilon() {
        let support = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        assert!(ceps_transform(&[0.0], &support, &[1.0], 0.0).is_err());
    }

    #[test]
    fn grad_two_diracs_points_away_from_target() {
        let a = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[3.0, 4.0]).unwrap();
        let params = SinkhornParams::new(0.01).with_tol(1e-10);
        let grad = sinkhorn_grad_points(&a, &b, &params).unwrap();
        assert!((grad[0] - 0.6).abs() < 1e-6);
        assert!((grad[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn grad_at_identity_is_zero() {
        let a = gauss(2, 6, 70);
        let params = SinkhornParams::new(0.2).with_tol(1e-10);
        let grad = sinkhorn_grad_points(&a, &a, &params).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-9);
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let a = gauss(2, 8, 80);
        let b = gauss(2, 8, 81);
        let params = SinkhornParams::new(0.5).with_tol(1e-12).with_max_iter(100_000);
        let grad = sinkhorn_grad_points(&a, &b, &params).unwrap();
        let h = 1e-5;
        for j in 0..8 {
            for k in 0..2 {
                let perturb = |delta: f64| {
                    let mut pts = b.points_flat().to_vec();
                    pts[j * 2 + k] += delta;
                    let bp = EmpiricalMeasure::uniform(pts, 2).unwrap();
                    sinkhorn_divergence(&a, &bp, &params).unwrap().value
                };
                let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
                let an = grad[j * 2 + k];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / denom < 1e-3,
                    "component ({j},{k}): fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn grad_refuses_unconverged() {
        let a = gauss(2, 10, 90);
        let b = gauss(2, 10, 91);
        let params = SinkhornParams::new(1e-4).with_tol(1e-12).with_max_iter(2);
        assert!(sinkhorn_grad_points(&a, &b, &params).is_err());
    }
}
