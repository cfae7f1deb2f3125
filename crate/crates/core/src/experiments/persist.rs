//! CSV and manifest persistence for experiment results.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::ExperimentResult;

impl ExperimentResult {
    /// Raw values, one row per repetition/grid point. Float formatting uses
    /// the shortest round-trip representation, so a replayed run reproduces
    /// the file byte for byte.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
        let io = |e: std::io::Error| Error::ingestion(path.display().to_string(), e.to_string());
        writeln!(f, "{}", self.columns.join(",")).map_err(io)?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(",")).map_err(io)?;
        }
        Ok(())
    }

    /// Everything needed to reproduce and interpret the run.
    pub fn manifest_json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "columns": self.columns,
            "summaries": self.summaries,
            "fit": self.fit,
            "wall_time_s": self.wall_time_s,
            "repetitions": self.rows.len(),
        })
    }
}

/// Read back a raw-values CSV (header plus float rows; NaN spelled `NaN`).
pub fn read_raw_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::ingestion(display.clone(), e.to_string()))?;
    let mut lines = content.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::ingestion(display.clone(), "empty csv"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::ingestion(display.clone(), format!("row {}: bad float {t:?}", i + 2))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{bernoulli_bias, summarize};
    use crate::rng::RngSeed;

    #[test]
    fn csv_roundtrip_preserves_bits() {
        let res = bernoulli_bias(3, 0.37, &[0.21, 0.5, 0.77], RngSeed::new(1, 0)).unwrap();
        let mut path = std::env::temp_dir();
        path.push(format!("otlab_persist_{}.csv", std::process::id()));
        res.write_csv(&path).unwrap();
        let (header, rows) = read_raw_csv(&path).unwrap();
        assert_eq!(header, res.columns);
        assert_eq!(rows.len(), res.rows.len());
        for (a, b) in rows.iter().flatten().zip(res.rows.iter().flatten()) {
            if a.is_nan() {
                assert!(b.is_nan());
            } else {
                assert_eq!(a, b);
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn summary_recomputable_from_raw_values() {
        let res = bernoulli_bias(4, 0.5, &[0.3, 0.6], RngSeed::new(1, 0)).unwrap();
        // The stored summaries must be functions of the raw rows alone.
        let losses = res.column_values("expected_loss");
        let s = summarize("check", &losses);
        let direct_min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let theta_bar = res.summary("theta_bar").unwrap().mean;
        let idx = losses.iter().position(|&v| v == direct_min).unwrap();
        assert_eq!(theta_bar, res.rows[idx][0]);
        assert!((s.mean - losses.iter().sum::<f64>() / 2.0).abs() < 1e-12);
    }
}
