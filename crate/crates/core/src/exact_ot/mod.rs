//! Exact discrete Wasserstein distances between empirical measures.
//!
//! Three routes to the same number: a transportation LP over general weights,
//! a permutation (assignment) solver for uniform equal-size supports, and an
//! exhaustive permutation oracle for tiny instances. The routes are kept
//! independent so each can check the others.

mod assignment;
mod flow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{euclidean, EmpiricalMeasure};

/// Pairwise euclidean costs, optionally raised to a power `p >= 1`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    entries: Vec<f64>, // row-major n x m
    n: usize,
    m: usize,
}

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Mean entry, used to set cost-relative Sinkhorn scales.
    pub fn mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }

    /// Median entry (by sorting a copy).
    pub fn median(&self) -> f64 {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }
}

/// Entry (i, j) is `||a_i - b_j||^p`.
pub fn cost_matrix(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::validation("cost power must be >= 1"));
    }
    let (n, m) = (a.len(), b.len());
    let mut entries = Vec::with_capacity(n * m);
    for x in a.iter_points() {
        for y in b.iter_points() {
            let d = euclidean(x, y);
            entries.push(if p == 1.0 { d } else { d.powf(p) });
        }
    }
    Ok(CostMatrix { entries, n, m })
}

/// A coupling with marginal bookkeeping.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Vec<f64>, // row-major n x m
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl TransportPlan {
    /// Largest absolute marginal violation against the stored marginals.
    pub fn marginal_violation(&self) -> f64 {
        let n = self.row_marginal.len();
        let m = self.col_marginal.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let s: f64 = self.coupling[i * m..(i + 1) * m].iter().sum();
            worst = worst.max((s - self.row_marginal[i]).abs());
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| self.coupling[i * m + j]).sum();
            worst = worst.max((s - self.col_marginal[j]).abs());
        }
        worst
    }
}

/// Which solver produced a [`W1Result`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverTag {
    Lp,
    Assignment,
    Brute,
}

#[derive(Debug, Clone)]
pub struct W1Result {
    pub value: f64,
    pub plan: TransportPlan,
    pub solver: SolverTag,
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Exact Wasserstein-1 via the transportation LP (general weights).
pub fn exact_w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<W1Result> {
    check_pair(a, b)?;
    let cost = cost_matrix(a, b, 1.0)?;
    let (coupling, value) = flow::solve_transport(a.weights(), b.weights(), cost.entries())?;
    Ok(W1Result {
        value,
        plan: TransportPlan {
            coupling,
            row_marginal: a.weights().to_vec(),
            col_marginal: b.weights().to_vec(),
        },
        solver: SolverTag::Lp,
    })
}

/// Exact transport cost for cost power `p` (returns the LP value, i.e. W_p^p).
pub fn exact_transport_cost(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(a, b)?;
    let cost = cost_matrix(a, b, p)?;
    let (_, value) = flow::solve_transport(a.weights(), b.weights(), cost.entries())?;
    Ok(value)
}

/// Wasserstein-1 between uniform equal-size measures via the permutation
/// (assignment) formulation: `(1/n) min_sigma sum_i ||x_i - y_sigma(i)||`.
pub fn assignment_w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<W1Result> {
    check_pair(a, b)?;
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "assignment route needs equal support sizes, got {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::validation(
            "assignment route needs uniform weights on both sides",
        ));
    }
    let n = a.len();
    let cost = cost_matrix(a, b, 1.0)?;
    let (perm, total) = assignment::solve_dense(n, cost.entries());
    let w = 1.0 / n as f64;
    let mut coupling = vec![0.0; n * n];
    for (i, &j) in perm.iter().enumerate() {
        coupling[i * n + j] = w;
    }
    Ok(W1Result {
        value: total / n as f64,
        plan: TransportPlan {
            coupling,
            row_marginal: a.weights().to_vec(),
            col_marginal: b.weights().to_vec(),
        },
        solver: SolverTag::Assignment,
    })
}

/// Exhaustive permutation minimum; test oracle for `n <= 8`.
pub fn brute_force_w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    if a.len() != b.len() {
        return Err(Error::validation("brute force needs equal support sizes"));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::validation("brute force needs uniform weights"));
    }
    let n = a.len();
    if n > 8 {
        return Err(Error::validation(format!(
            "brute force refuses n = {n} > 8 (combinatorial guard)"
        )));
    }
    let cost = cost_matrix(a, b, 1.0)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
        if total < best {
            best = total;
        }
    });
    Ok(best / n as f64)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Fastest exact route for the given pair: the assignment solver when both
/// sides are uniform with equal support size, the LP otherwise.
pub fn batch_w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        Ok(assignment_w1(a, b)?.value)
    } else {
        Ok(exact_w1(a, b)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{sample, DistributionSpec};
    use crate::rng::RngSeed;

    fn uniform(points: Vec<f64>, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(points, d).unwrap()
    }

    #[test]
    fn cost_matrix_345() {
        let a = uniform(vec![0.0, 0.0], 2);
        let b = uniform(vec![3.0, 4.0], 2);
        let c = cost_matrix(&a, &b, 1.0).unwrap();
        assert!((c.get(0, 0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cost_matrix_self_zero_diagonal() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 3 }, 5, RngSeed::new(1, 0)).unwrap();
        let c = cost_matrix(&a, &a, 1.0).unwrap();
        for i in 0..5 {
            assert_eq!(c.get(i, i), 0.0);
        }
    }

    #[test]
    fn cost_matrix_power_two() {
        let a = uniform(vec![0.0], 1);
        let b = uniform(vec![2.0], 1);
        let c = cost_matrix(&a, &b, 2.0).unwrap();
        assert!((c.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cost_matrix_dim_mismatch() {
        let a = uniform(vec![0.0], 1);
        let b = uniform(vec![0.0, 0.0], 2);
        assert!(cost_matrix(&a, &b, 1.0).is_err());
    }

    #[test]
    fn exact_w1_identity() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 2 }, 6, RngSeed::new(2, 0)).unwrap();
        let r = exact_w1(&a, &a).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn exact_w1_two_diracs() {
        let a = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[3.0, 4.0]).unwrap();
        let r = exact_w1(&a, &b).unwrap();
        assert!((r.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn exact_w1_shifted_pair_on_line() {
        let a = uniform(vec![0.0, 1.0], 1);
        let b = uniform(vec![0.0, 2.0], 1);
        let r = exact_w1(&a, &b).unwrap();
        let oracle = brute_force_w1(&a, &b).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.value - oracle).abs() < 1e-12);
    }

    #[test]
    fn assignment_matches_brute_force_small_random() {
        for s in 0..20 {
            let a = sample(&DistributionSpec::StandardGaussian { d: 2 }, 3, RngSeed::new(7, 2 * s)).unwrap();
            let b = sample(&DistributionSpec::StandardGaussian { d: 2 }, 3, RngSeed::new(7, 2 * s + 1)).unwrap();
            let r = assignment_w1(&a, &b).unwrap();
            let oracle = brute_force_w1(&a, &b).unwrap();
            assert!((r.value - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_two_point_line() {
        let a = uniform(vec![0.0, 10.0], 1);
        let b = uniform(vec![1.0, 9.0], 1);
        let r = assignment_w1(&a, &b).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_shuffled_identical_clouds() {
        let a = uniform(vec![1.0, 2.0, 5.0, -1.0, 0.5, 3.0], 2);
        let b = uniform(vec![0.5, 3.0, 1.0, 2.0, 5.0, -1.0], 2);
        let r = assignment_w1(&a, &b).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn assignment_rejects_nonuniform() {
        let a = EmpiricalMeasure::new(vec![0.0, 1.0], 1, vec![0.3, 0.7]).unwrap();
        let b = uniform(vec![0.0, 1.0], 1);
        assert!(assignment_w1(&a, &b).is_err());
    }

    #[test]
    fn brute_force_guard() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 1 }, 9, RngSeed::new(1, 0)).unwrap();
        assert!(brute_force_w1(&a, &a).is_err());
    }

    #[test]
    fn lp_matches_brute_on_n4() {
        for s in 0..10 {
            let a = sample(&DistributionSpec::StandardGaussian { d: 3 }, 4, RngSeed::new(13, 2 * s)).unwrap();
            let b = sample(&DistributionSpec::StandardGaussian { d: 3 }, 4, RngSeed::new(13, 2 * s + 1)).unwrap();
            let r = exact_w1(&a, &b).unwrap();
            let oracle = brute_force_w1(&a, &b).unwrap();
            assert!((r.value - oracle).abs() < 1e-9, "lp {} vs brute {}", r.value, oracle);
            assert!(r.plan.marginal_violation() < 1e-9);
        }
    }

    #[test]
    fn plan_value_consistency() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 2 }, 5, RngSeed::new(21, 0)).unwrap();
        let b = sample(&DistributionSpec::StandardGaussian { d: 2 }, 5, RngSeed::new(21, 1)).unwrap();
        let r = exact_w1(&a, &b).unwrap();
        let cost = cost_matrix(&a, &b, 1.0).unwrap();
        let recomputed: f64 = r
            .plan
            .coupling
            .iter()
            .zip(cost.entries())
            .map(|(g, c)| g * c)
            .sum();
        assert!((recomputed - r.value).abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_sorted_matching() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 1 }, 40, RngSeed::new(31, 0)).unwrap();
        let b = sample(&DistributionSpec::StandardGaussian { d: 1 }, 40, RngSeed::new(31, 1)).unwrap();
        let r = assignment_w1(&a, &b).unwrap();
        let mut xs: Vec<f64> = a.points_flat().to_vec();
        let mut ys: Vec<f64> = b.points_flat().to_vec();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let sorted: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / 40.0;
        assert!((r.value - sorted).abs() < 1e-9);
    }

    #[test]
    fn homogeneity_and_translation() {
        let a = sample(&DistributionSpec::StandardGaussian { d: 2 }, 7, RngSeed::new(41, 0)).unwrap();
        let b = sample(&DistributionSpec::StandardGaussian { d: 2 }, 7, RngSeed::new(41, 1)).unwrap();
        let base = exact_w1(&a, &b).unwrap().value;
        let scaled = exact_w1(&a.scaled(2.5), &b.scaled(2.5)).unwrap().value;
        assert!((scaled - 2.5 * base).abs() < 1e-9);
        let shift = [0.7, -1.3];
        let moved = exact_w1(&a.translated(&shift), &b.translated(&shift)).unwrap().value;
        assert!((moved - base).abs() < 1e-9);
    }
}
