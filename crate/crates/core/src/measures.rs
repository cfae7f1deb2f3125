//! Point-cloud and distribution primitives: synthetic samplers, file
//! ingestion, and batch constructions.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// A weighted finite point cloud in `R^d`.
///
/// Weights are nonnegative and sum to one; all entries are finite. Measures
/// are immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>, // row-major, n x d
    weights: Vec<f64>,
    dim: usize,
}

impl EmpiricalMeasure {
    /// Build a measure from row-major points with explicit weights.
    ///
    /// Weights are renormalized when their sum is within 1e-6 of one;
    /// anything farther off is rejected.
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dimension must be at least 1"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::validation(format!(
                "point buffer length {} is not a positive multiple of dim {}",
                points.len(),
                dim
            )));
        }
        let n = points.len() / dim;
        if weights.len() != n {
            return Err(Error::validation(format!(
                "{} weights for {} points",
                weights.len(),
                n
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite point coordinate"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "weights sum to {sum}, expected 1 within 1e-6"
            )));
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(EmpiricalMeasure {
            points,
            weights,
            dim,
        })
    }

    /// Uniformly weighted measure over the given points.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::validation("invalid point buffer for uniform measure"));
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n as f64; n])
    }

    /// Dirac measure at a single point.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::uniform(point.to_vec(), point.len())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// True when every weight equals 1/n within 1e-12.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-12)
    }

    /// Weighted arithmetic mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, &w) in self.iter_points().zip(&self.weights) {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    /// Measure with every point scaled by `s` (weights unchanged).
    pub fn scaled(&self, s: f64) -> EmpiricalMeasure {
        EmpiricalMeasure {
            points: self.points.iter().map(|v| v * s).collect(),
            weights: self.weights.clone(),
            dim: self.dim,
        }
    }

    /// Measure with `shift` added to every point.
    pub fn translated(&self, shift: &[f64]) -> EmpiricalMeasure {
        assert_eq!(shift.len(), self.dim);
        let points = self
            .points
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        EmpiricalMeasure {
            points,
            weights: self.weights.clone(),
            dim: self.dim,
        }
    }
}

/// Euclidean distance between two points.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sampleable distribution families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistributionSpec {
    /// Standard Gaussian in `d` dimensions.
    StandardGaussian { d: usize },
    /// Isotropic Gaussian mixture; `centers` is row-major k x d.
    GaussianMixture {
        centers: Vec<f64>,
        d: usize,
        stds: Vec<f64>,
        mix_weights: Vec<f64>,
    },
    /// Bernoulli(theta) embedded in R^1 as {0, 1}.
    Bernoulli { theta: f64 },
    /// Empirical distribution read from a CSV file (resampled i.i.d.).
    FromFile { path: String, options: LoadOptions },
}

impl DistributionSpec {
    /// The standard toy benchmark: `k` modes equally spaced on a circle.
    pub fn ring_mixture(k: usize, radius: f64, std: f64) -> DistributionSpec {
        let mut centers = Vec::with_capacity(2 * k);
        for i in 0..k {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            centers.push(radius * angle.cos());
            centers.push(radius * angle.sin());
        }
        DistributionSpec::GaussianMixture {
            centers,
            d: 2,
            stds: vec![std; k],
            mix_weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn dim(&self) -> Result<usize> {
        match self {
            DistributionSpec::StandardGaussian { d } => Ok(*d),
            DistributionSpec::GaussianMixture { d, .. } => Ok(*d),
            DistributionSpec::Bernoulli { .. } => Ok(1),
            DistributionSpec::FromFile { path, options } => {
                Ok(load_measure(Path::new(path), options)?.dim())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::StandardGaussian { d } => {
                if *d == 0 {
                    return Err(Error::validation("gaussian dimension must be >= 1"));
                }
            }
            DistributionSpec::GaussianMixture {
                centers,
                d,
                stds,
                mix_weights,
            } => {
                if *d == 0 || centers.is_empty() || centers.len() % d != 0 {
                    return Err(Error::validation("mixture centers must be k x d with k >= 1"));
                }
                let k = centers.len() / d;
                if stds.len() != k || mix_weights.len() != k {
                    return Err(Error::validation("mixture needs one std and weight per center"));
                }
                if stds.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::validation("mixture stds must be positive"));
                }
                let sum: f64 = mix_weights.iter().sum();
                if mix_weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::validation("mix weights must be nonnegative and sum to 1"));
                }
            }
            DistributionSpec::Bernoulli { theta } => {
                if !(0.0..=1.0).contains(theta) {
                    return Err(Error::validation("bernoulli theta must lie in [0, 1]"));
                }
            }
            DistributionSpec::FromFile { .. } => {}
        }
        Ok(())
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::StandardGaussian { d } => write!(f, "gaussian:{d}"),
            DistributionSpec::GaussianMixture { centers, d, .. } => {
                write!(f, "mixture:k={},d={}", centers.len() / d, d)
            }
            DistributionSpec::Bernoulli { theta } => write!(f, "bernoulli:{theta}"),
            DistributionSpec::FromFile { path, .. } => write!(f, "file:{path}"),
        }
    }
}

/// Draw `n` i.i.d. samples as a uniformly weighted measure.
///
/// Deterministic given the (seed, stream) pair.
pub fn sample(spec: &DistributionSpec, n: usize, seed: RngSeed) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::validation("sample size must be at least 1"));
    }
    spec.validate()?;
    let mut rng = seed.rng();
    match spec {
        DistributionSpec::StandardGaussian { d } => {
            let points: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
            EmpiricalMeasure::uniform(points, *d)
        }
        DistributionSpec::GaussianMixture {
            centers,
            d,
            stds,
            mix_weights,
        } => {
            let mut points = Vec::with_capacity(n * d);
            for _ in 0..n {
                let c = categorical(&mut rng, mix_weights);
                let center = &centers[c * d..(c + 1) * d];
                for &ci in center {
                    let z: f64 = rng.sample(StandardNormal);
                    points.push(ci + stds[c] * z);
                }
            }
            EmpiricalMeasure::uniform(points, *d)
        }
        DistributionSpec::Bernoulli { theta } => {
            let points: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<f64>() < *theta { 1.0 } else { 0.0 })
                .collect();
            EmpiricalMeasure::uniform(points, 1)
        }
        DistributionSpec::FromFile { path, options } => {
            let base = load_measure(Path::new(path), options)?;
            let mut points = Vec::with_capacity(n * base.dim());
            for _ in 0..n {
                let i = categorical(&mut rng, base.weights());
                points.extend_from_slice(base.point(i));
            }
            EmpiricalMeasure::uniform(points, base.dim())
        }
    }
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Options for CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Skip the first row.
    pub skip_header: bool,
    /// Treat the last column as a per-point weight.
    pub weight_column: bool,
}

/// Load a measure from a text file: one point per row, comma- or
/// whitespace-separated floats, optionally a trailing weight column.
pub fn load_measure(path: &Path, options: &LoadOptions) -> Result<EmpiricalMeasure> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::ingestion(display.clone(), e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 && options.skip_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let mut row = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let v: f64 = tok.parse().map_err(|_| {
                Error::ingestion(
                    display.clone(),
                    format!("row {}: non-numeric token {tok:?}", idx + 1),
                )
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::ingestion(
                    display.clone(),
                    format!(
                        "row {}: expected {} columns, found {}",
                        idx + 1,
                        first.len(),
                        row.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ingestion(display, "no rows"));
    }
    let cols = rows[0].len();
    if options.weight_column && cols < 2 {
        return Err(Error::ingestion(display, "weight column requires at least 2 columns"));
    }
    let dim = if options.weight_column { cols - 1 } else { cols };
    let mut points = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for row in &rows {
        points.extend_from_slice(&row[..dim]);
        if options.weight_column {
            weights.push(row[dim]);
        }
    }
    if options.weight_column {
        EmpiricalMeasure::new(points, dim, weights)
    } else {
        EmpiricalMeasure::uniform(points, dim)
    }
}

/// Draw `n` atoms i.i.d. from an empirical measure (by weight, with
/// replacement), as a uniformly weighted batch.
pub fn resample(m: &EmpiricalMeasure, n: usize, seed: RngSeed) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::validation("resample size must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut points = Vec::with_capacity(n * m.dim());
    for _ in 0..n {
        let i = categorical(&mut rng, m.weights());
        points.extend_from_slice(m.point(i));
    }
    EmpiricalMeasure::uniform(points, m.dim())
}

/// `n` copies of the weighted mean of `m`, uniformly weighted.
pub fn mean_batch(m: &EmpiricalMeasure, n: usize) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::validation("mean batch size must be at least 1"));
    }
    let mean = m.mean();
    let mut points = Vec::with_capacity(n * m.dim());
    for _ in 0..n {
        points.extend_from_slice(&mean);
    }
    EmpiricalMeasure::uniform(points, m.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!("otlab_measures_{}_{:x}.csv", std::process::id(), content.len() * 31 + content.as_bytes().iter().map(|&b| b as usize).sum::<usize>()));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn bernoulli_degenerate_gives_all_ones() {
        let m = sample(&DistributionSpec::Bernoulli { theta: 1.0 }, 5, RngSeed::new(1, 0)).unwrap();
        assert_eq!(m.len(), 5);
        assert!(m.iter_points().all(|p| p == [1.0]));
    }

    #[test]
    fn gaussian_shape_and_weights() {
        let m = sample(&DistributionSpec::StandardGaussian { d: 2 }, 3, RngSeed::new(1, 0)).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.dim(), 2);
        for w in m.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = DistributionSpec::StandardGaussian { d: 4 };
        let a = sample(&spec, 100, RngSeed::new(9, 3)).unwrap();
        let b = sample(&spec, 100, RngSeed::new(9, 3)).unwrap();
        assert_eq!(a.points_flat(), b.points_flat());
        let c = sample(&spec, 100, RngSeed::new(9, 4)).unwrap();
        assert_ne!(a.points_flat(), c.points_flat());
    }

    #[test]
    fn mixture_cluster_counts_chi_square() {
        // Per-cluster counts should look multinomial over the 8 modes:
        // chi-square with 7 degrees of freedom, 99.9% quantile 24.32.
        let spec = DistributionSpec::ring_mixture(8, 2.0, 0.05);
        let m = sample(&spec, 250, RngSeed::new(5, 0)).unwrap();
        let centers: Vec<Vec<f64>> = match &spec {
            DistributionSpec::GaussianMixture { centers, d, .. } => {
                centers.chunks(*d).map(|c| c.to_vec()).collect()
            }
            _ => unreachable!(),
        };
        let mut counts = vec![0usize; centers.len()];
        for p in m.iter_points() {
            let nearest = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    euclidean(p, a).partial_cmp(&euclidean(p, b)).unwrap()
                })
                .unwrap()
                .0;
            counts[nearest] += 1;
        }
        let expected = 250.0 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 24.32, "chi-square statistic {chi2} too large");
    }

    #[test]
    fn load_csv_basic() {
        let path = write_temp("0,0\n1,1\n");
        let m = load_measure(&path, &LoadOptions::default()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn load_csv_weight_column() {
        let path = write_temp("0,0,0,0.2\n1,1,1,0.8\n");
        let m = load_measure(
            &path,
            &LoadOptions {
                skip_header: false,
                weight_column: true,
            },
        )
        .unwrap();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.weights(), &[0.2, 0.8]);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn load_csv_weight_sum_far_from_one_is_error() {
        let path = write_temp("0,0.4\n1,0.4\n");
        let err = load_measure(
            &path,
            &LoadOptions {
                skip_header: false,
                weight_column: true,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("weights sum"));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn load_csv_empty_is_error() {
        let path = write_temp("");
        let err = load_measure(&path, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no rows"));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn load_csv_ragged_reports_row() {
        let path = write_temp("0,0\n1\n");
        let err = load_measure(&path, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("row 2"));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn load_csv_whitespace_separated() {
        let path = write_temp("0 0\n1 1\n");
        let m = load_measure(&path, &LoadOptions::default()).unwrap();
        assert_eq!(m.len(), 2);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn mean_batch_two_points() {
        let m = EmpiricalMeasure::uniform(vec![0.0, 0.0, 2.0, 2.0], 2).unwrap();
        let b = mean_batch(&m, 4).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter_points().all(|p| p == [1.0, 1.0]));
    }

    #[test]
    fn mean_batch_single_point() {
        let m = EmpiricalMeasure::dirac(&[3.0]).unwrap();
        let b = mean_batch(&m, 2).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter_points().all(|p| p == [3.0]));
    }

    #[test]
    fn mean_batch_zero_is_error() {
        let m = EmpiricalMeasure::dirac(&[3.0]).unwrap();
        assert!(mean_batch(&m, 0).is_err());
    }

    #[test]
    fn mean_of_large_gaussian_sample_is_near_origin() {
        // CLT scale: ||mean of 1000 samples|| ~ sqrt(d/n) ~ 0.14 for d = 20.
        let m = sample(&DistributionSpec::StandardGaussian { d: 20 }, 1000, RngSeed::new(11, 0)).unwrap();
        let b = mean_batch(&m, 64).unwrap();
        let norm = euclidean(b.point(0), &vec![0.0; 20]);
        assert!(norm < 0.5, "mean norm {norm}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(sample(&DistributionSpec::Bernoulli { theta: 1.5 }, 3, RngSeed::new(0, 0)).is_err());
        assert!(sample(
            &DistributionSpec::GaussianMixture {
                centers: vec![0.0, 0.0],
                d: 2,
                stds: vec![-1.0],
                mix_weights: vec![1.0],
            },
            3,
            RngSeed::new(0, 0)
        )
        .is_err());
        assert!(sample(&DistributionSpec::StandardGaussian { d: 2 }, 0, RngSeed::new(0, 0)).is_err());
    }
}
