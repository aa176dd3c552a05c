//! Per-variable z-score standardization fitted on training runs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MonitoringSeries;
use crate::error::{Error, Result};

/// Variables whose standard deviation falls below this standardize to zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub variables: Vec<String>,
    pub mean: Vec<f64>,
    /// Sample standard deviation; 1 for degenerate variables.
    pub std: Vec<f64>,
    /// Variables whose raw deviation fell below [`SIGMA_FLOOR`].
    pub constant: Vec<bool>,
    /// Runs the statistics were fitted on.
    pub fitted_runs: Vec<String>,
}

impl StandardizationStats {
    /// Fails with a leakage error if any of `runs` contributed to the fit.
    pub fn ensure_disjoint<'a>(&self, runs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for run in runs {
            if self.fitted_runs.iter().any(|r| r == run) {
                return Err(Error::Leakage { run: run.to_string() });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn check_variables(&self, variables: &[String]) -> Result<()> {
        if variables != self.variables.as_slice() {
            return Err(Error::invalid(
                "stats",
                format!(
                    "statistics cover variables {:?}, series has {:?}",
                    self.variables, variables
                ),
            ));
        }
        Ok(())
    }

    /// Standardizes one row in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if self.constant[j] {
                0.0
            } else {
                (*x - self.mean[j]) / self.std[j]
            };
        }
    }
}

/// Pooled mean and sample standard deviation over every sample of `runs`.
pub fn fit_stats(runs: &[&MonitoringSeries]) -> Result<StandardizationStats> {
    let first = runs
        .first()
        .ok_or_else(|| Error::invalid("runs", "cannot fit statistics on zero runs"))?;
    let v = first.n_vars();
    for r in runs {
        if r.variables != first.variables {
            return Err(Error::invalid(
                "runs",
                format!(
                    "run `{}` has a different variable set from `{}`",
                    r.run_id, first.run_id
                ),
            ));
        }
    }
    let n: usize = runs.iter().map(|r| r.len()).sum();
    let mut mean = vec![0.0; v];
    for r in runs {
        for t in 0..r.len() {
            for (m, x) in mean.iter_mut().zip(r.row(t)) {
                *m += x;
            }
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut ss = vec![0.0; v];
    for r in runs {
        for t in 0..r.len() {
            for ((s, m), x) in ss.iter_mut().zip(&mean).zip(r.row(t)) {
                *s += (x - m) * (x - m);
            }
        }
    }
    let mut std = Vec::with_capacity(v);
    let mut constant = Vec::with_capacity(v);
    for s in ss {
        let sigma = if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 };
        let degenerate = sigma < SIGMA_FLOOR;
        constant.push(degenerate);
        std.push(if degenerate { 1.0 } else { sigma });
    }
    Ok(StandardizationStats {
        variables: first.variables.clone(),
        mean,
        std,
        constant,
        fitted_runs: runs.iter().map(|r| r.run_id.clone()).collect(),
    })
}

/// Z-scores `series` with previously fitted statistics.
pub fn apply_stats(series: &MonitoringSeries, stats: &StandardizationStats) -> Result<MonitoringSeries> {
    stats.check_variables(&series.variables)?;
    let mut out = series.clone();
    for row in out.samples.chunks_exact_mut(series.n_vars()) {
        stats.apply_row(row);
    }
    Ok(out)
}

/// Inverse of [`apply_stats`]; constant variables come back as their mean.
pub fn destandardize(series: &MonitoringSeries, stats: &StandardizationStats) -> Result<MonitoringSeries> {
    stats.check_variables(&series.variables)?;
    let mut out = series.clone();
    for row in out.samples.chunks_exact_mut(series.n_vars()) {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if stats.constant[j] {
                stats.mean[j]
            } else {
                *x * stats.std[j] + stats.mean[j]
            };
        }
    }
    Ok(out)
}
