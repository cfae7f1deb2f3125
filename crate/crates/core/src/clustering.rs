//! Geometric medians (Weiszfeld iteration), geometric k-medians clustering
//! (Lloyd alternation with median centroids), and nearest-neighbour
//! projection measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{euclidean, EmpiricalMeasure};
use crate::rng::RngSeed;
use rand::Rng;

/// Stopping and anchor-handling knobs for the Weiszfeld iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeiszfeldParams {
    pub max_iter: usize,
    /// Stop once the iterate moves less than this.
    pub tol: f64,
    /// Distance under which an iterate is treated as sitting on a data point.
    pub anchor_epsilon: f64,
}

impl Default for WeiszfeldParams {
    fn default() -> Self {
        WeiszfeldParams {
            max_iter: 1000,
            tol: 1e-10,
            anchor_epsilon: 1e-12,
        }
    }
}

/// Weighted geometric median via Weiszfeld iteration.
///
/// The plain iteration is undefined at data points; when an iterate lands on
/// one we check the anchor's optimality through the subgradient and otherwise
/// step along it (Vardi-Zhang correction).
pub fn geometric_median(
    points: &[f64],
    dim: usize,
    weights: &[f64],
    params: &WeiszfeldParams,
) -> Vec<f64> {
    let n = weights.len();
    assert_eq!(points.len(), n * dim);
    assert!(n >= 1);
    if n == 1 {
        return points[..dim].to_vec();
    }

    // Start from the weighted mean.
    let wsum: f64 = weights.iter().sum();
    let mut m = vec![0.0; dim];
    for (p, &w) in points.chunks(dim).zip(weights) {
        for (mi, pi) in m.iter_mut().zip(p) {
            *mi += w * pi / wsum;
        }
    }

    for _ in 0..params.max_iter {
        // Anchor check: the iterate may coincide with a data point.
        let mut anchor: Option<usize> = None;
        for (i, p) in points.chunks(dim).enumerate() {
            if euclidean(&m, p) < params.anchor_epsilon {
                anchor = Some(i);
                break;
            }
        }

        // r = sum over non-anchor points of w_i (x_i - m) / ||x_i - m||,
        // t = sum of w_i / ||x_i - m|| (Weiszfeld denominators).
        let mut r = vec![0.0; dim];
        let mut t = 0.0;
        let mut weiszfeld = vec![0.0; dim];
        for (i, (p, &w)) in points.chunks(dim).zip(weights).enumerate() {
            if Some(i) == anchor {
                continue;
            }
            let d = euclidean(&m, p);
            if d < 1e-300 {
                continue;
            }
            for k in 0..dim {
                r[k] += w * (p[k] - m[k]) / d;
                weiszfeld[k] += w * p[k] / d;
            }
            t += w / d;
        }
        if t == 0.0 {
            break; // all points coincide with the iterate
        }
        let r_norm = euclidean(&r, &vec![0.0; dim]);
        let next: Vec<f64> = match anchor {
            None => weiszfeld.iter().map(|v| v / t).collect(),
            Some(i) => {
                let wa = weights[i];
                if r_norm <= wa {
                    // The data point is optimal.
                    return m;
                }
                let tm: Vec<f64> = weiszfeld.iter().map(|v| v / t).collect();
                let beta = (wa / r_norm).min(1.0);
                tm.iter()
                    .zip(&m)
                    .map(|(tv, mv)| (1.0 - beta) * tv + beta * mv)
                    .collect()
            }
        };
        let step = euclidean(&next, &m);
        m = next;
        if step < params.tol {
            break;
        }
    }
    m
}

/// Sum of weighted distances from the support to `m`.
pub fn median_objective(points: &[f64], dim: usize, weights: &[f64], m: &[f64]) -> f64 {
    points
        .chunks(dim)
        .zip(weights)
        .map(|(p, &w)| w * euclidean(p, m))
        .sum()
}

/// Result of a k-medians clustering run.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    /// Row-major k x d centroid coordinates.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Index of the owning centroid per data point.
    pub assignment: Vec<usize>,
    /// Weighted mean distance of the data to its assigned centroid
    /// (the expectation of d(x, S) under the data measure).
    pub objective: f64,
    /// Objective after each assignment step of the winning run.
    pub objective_trace: Vec<f64>,
}

impl ClusterSet {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

fn nearest_centroid(p: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.chunks(dim).enumerate() {
        let d = euclidean(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

fn kmeanspp_seed(data: &EmpiricalMeasure, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = data.len();
    let dim = data.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(data.point(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| {
            let d = euclidean(data.point(i), data.point(first));
            d * d
        })
        .collect();
    for _ in 1..k {
        let total: f64 = dist2.iter().sum();
        let idx = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut u: f64 = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d2) in dist2.iter().enumerate() {
                u -= d2;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let c_start = centroids.len();
        centroids.extend_from_slice(data.point(idx));
        let new_c = centroids[c_start..].to_vec();
        for i in 0..n {
            let d = euclidean(data.point(i), &new_c);
            dist2[i] = dist2[i].min(d * d);
        }
    }
    centroids
}

fn lloyd_run(
    data: &EmpiricalMeasure,
    k: usize,
    mut centroids: Vec<f64>,
    weiszfeld: &WeiszfeldParams,
) -> ClusterSet {
    let n = data.len();
    let dim = data.dim();
    let mut assignment = vec![0usize; n];
    let mut objective = f64::INFINITY;
    let mut trace = Vec::new();

    for _ in 0..200 {
        // Assignment step.
        let mut obj = 0.0;
        for i in 0..n {
            let (c, d) = nearest_centroid(data.point(i), &centroids, dim);
            assignment[i] = c;
            obj += data.weights()[i] * d;
        }

        // Re-seed empty clusters at the farthest point. Moving an unused
        // centroid cannot increase the objective.
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&i, &j| {
                        let di = euclidean(data.point(i), &centroids[assignment[i] * dim..(assignment[i] + 1) * dim]);
                        let dj = euclidean(data.point(j), &centroids[assignment[j] * dim..(assignment[j] + 1) * dim]);
                        di.partial_cmp(&dj).unwrap()
                    })
                    .unwrap();
                centroids[c * dim..(c + 1) * dim].copy_from_slice(data.point(far));
                reseeded = true;
            }
        }
        if reseeded {
            continue;
        }

        trace.push(obj);
        if obj >= objective - 1e-9 {
            break;
        }
        objective = obj;

        // Update step: geometric median of each cluster, kept only when it
        // does not regress on the incumbent centroid.
        for c in 0..k {
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for i in 0..n {
                if assignment[i] == c {
                    pts.extend_from_slice(data.point(i));
                    ws.push(data.weights()[i]);
                }
            }
            let median = geometric_median(&pts, dim, &ws, weiszfeld);
            let incumbent = centroids[c * dim..(c + 1) * dim].to_vec();
            if median_objective(&pts, dim, &ws, &median)
                <= median_objective(&pts, dim, &ws, &incumbent)
            {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&median);
            }
        }
    }

    // Final consistent assignment/objective for the returned centroids.
    let mut obj = 0.0;
    for i in 0..n {
        let (c, d) = nearest_centroid(data.point(i), &centroids, dim);
        assignment[i] = c;
        obj += data.weights()[i] * d;
    }
    trace.push(obj);
    ClusterSet {
        centroids,
        dim,
        assignment,
        objective: obj,
        objective_trace: trace,
    }
}

/// Geometric k-medians by Lloyd alternation with k-means++ style seeding.
///
/// Runs `n_init` independently seeded restarts and returns the best
/// objective (ties broken by restart index).
pub fn k_gm_lloyd(
    data: &EmpiricalMeasure,
    k: usize,
    n_init: usize,
    seed: RngSeed,
) -> Result<ClusterSet> {
    if k == 0 || k > data.len() {
        return Err(Error::validation(format!(
            "k = {k} must lie in 1..={}",
            data.len()
        )));
    }
    if n_init == 0 {
        return Err(Error::validation("n_init must be at least 1"));
    }
    let weiszfeld = WeiszfeldParams::default();
    let mut best: Option<ClusterSet> = None;
    for restart in 0..n_init {
        let mut rng = seed.derive(restart as u64).rng();
        let init = kmeanspp_seed(data, k, &mut rng);
        let run = lloyd_run(data, k, init, &weiszfeld);
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Push every atom of `rho` to its nearest point of `s_points` (ties to the
/// lowest index), aggregating weights. Centroids that receive no mass are
/// dropped from the support.
pub fn projection_measure(
    s_points: &[f64],
    dim: usize,
    rho: &EmpiricalMeasure,
) -> Result<EmpiricalMeasure> {
    if s_points.is_empty() || s_points.len() % dim != 0 {
        return Err(Error::validation("S must be a nonempty k x d set"));
    }
    if rho.dim() != dim {
        return Err(Error::validation("dimension mismatch between S and rho"));
    }
    let k = s_points.len() / dim;
    let mut mass = vec![0.0; k];
    for (p, &w) in rho.iter_points().zip(rho.weights()) {
        let (c, _) = nearest_centroid(p, s_points, dim);
        mass[c] += w;
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for c in 0..k {
        if mass[c] > 0.0 {
            points.extend_from_slice(&s_points[c * dim..(c + 1) * dim]);
            weights.push(mass[c]);
        }
    }
    EmpiricalMeasure::new(points, dim, weights)
}

/// The projection measure of `data` onto its geometric k-medians
/// (atoms at the centroids, weights proportional to cluster mass).
/// Uses 100 clustering restarts.
pub fn kgm_batch(data: &EmpiricalMeasure, k: usize, seed: RngSeed) -> Result<EmpiricalMeasure> {
    kgm_batch_with(data, k, 100, seed)
}

/// [`kgm_batch`] with an explicit restart count.
pub fn kgm_batch_with(
    data: &EmpiricalMeasure,
    k: usize,
    n_init: usize,
    seed: RngSeed,
) -> Result<EmpiricalMeasure> {
    let clusters = k_gm_lloyd(data, k, n_init, seed)?;
    projection_measure(&clusters.centroids, clusters.dim, data)
}
