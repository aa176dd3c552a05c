//! Pooling comparison tables: best value per index for each quantifier on
//! one layout, the epoch count that produced it, and the relative change
//! against a baseline quantifier.

use std::fmt::Write as _;

use super::ConfigSummary;
use crate::error::{Error, Result};
use crate::layouts::LayoutName;
use crate::quantifiers::Quantifier;

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

/// `100 * (candidate - baseline) / baseline`; `None` for a zero baseline.
pub fn delta_percent(baseline: f64, candidate: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some(100.0 * (candidate - baseline) / baseline)
    }
}

/// Two decimals, halves rounded up. The small nudge absorbs binary
/// representation error on exact halves.
pub fn format_delta(delta: f64) -> String {
    let rounded = (delta * 100.0 + 0.5 + 1e-6).floor() / 100.0;
    let s = format!("{rounded:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub quantifier: Quantifier,
    pub baseline: bool,
    /// Best accuracy, macro precision, macro recall, macro F1.
    pub values: [f64; 4],
    /// Epoch count of the configuration that reached each best value.
    pub epochs: [usize; 4],
    /// Relative change against the baseline row; `None` on the baseline.
    pub deltas: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolingReport {
    pub layout: LayoutName,
    pub baseline: Quantifier,
    pub rows: Vec<ReportRow>,
}

fn layout_label(layout: LayoutName) -> &'static str {
    match layout {
        LayoutName::Model7 => "Model7",
        LayoutName::Model3 => "Model3",
        LayoutName::Lenet5 => "LeNet-5",
    }
}

fn row_label(layout: LayoutName, q: &Quantifier) -> String {
    match q {
        Quantifier::ThereExists => format!("{}-MaxPooling", layout_label(layout)),
        _ => format!("{}-Pooling({})", layout_label(layout), q),
    }
}

fn metric(s: &ConfigSummary, k: usize) -> f64 {
    [s.accuracy, s.macro_precision, s.macro_recall, s.macro_f1][k]
}

impl PoolingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,quantifier");
        for m in METRIC_NAMES {
            let _ = write!(out, ",{m},{m}_delta_pct,{m}_epochs");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.label, row.quantifier.token());
            for k in 0..4 {
                let delta = match row.deltas[k] {
                    _ if row.baseline => "-".to_string(),
                    Some(d) => format_delta(d),
                    None => "n/a".to_string(),
                };
                let _ = write!(out, ",{:.4},{},{}", row.values[k], delta, row.epochs[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the comparison for `layout` (or the only layout in `results`).
/// For each quantifier and index the best fold-averaged value over all its
/// configurations is reported; ties go to fewer epochs. Configurations with
/// failed folds are ignored.
pub fn pooling_report(
    results: &[ConfigSummary],
    layout: Option<LayoutName>,
    baseline: &Quantifier,
) -> Result<PoolingReport> {
    let layout = match layout {
        Some(l) => l,
        None => {
            let mut names: Vec<LayoutName> = results.iter().map(|s| s.config.layout).collect();
            names.dedup();
            names.sort_by_key(|n| n.as_str());
            names.dedup();
            match names.as_slice() {
                [one] => *one,
                [] => return Err(Error::invalid("results", "no results to report")),
                _ => return Err(Error::invalid("layout", "results cover several layouts; choose one")),
            }
        }
    };
    let usable: Vec<&ConfigSummary> = results
        .iter()
        .filter(|s| s.config.layout == layout && s.complete())
        .collect();
    let mut quantifiers: Vec<Quantifier> = Vec::new();
    for s in &usable {
        if !quantifiers.contains(&s.config.quantifier) {
            quantifiers.push(s.config.quantifier);
        }
    }
    if !quantifiers.contains(baseline) {
        return Err(Error::invalid(
            "baseline",
            format!("no complete results for baseline `{}` on {layout}", baseline.token()),
        ));
    }
    if quantifiers.len() < 2 {
        return Err(Error::invalid(
            "results",
            format!("no candidate quantifier besides the baseline `{}`", baseline.token()),
        ));
    }
    quantifiers.retain(|q| q != baseline);
    quantifiers.insert(0, *baseline);

    let best = |q: &Quantifier| -> ([f64; 4], [usize; 4]) {
        let mut values = [f64::NEG_INFINITY; 4];
        let mut epochs = [usize::MAX; 4];
        for s in usable.iter().filter(|s| s.config.quantifier == *q) {
            for k in 0..4 {
                let v = metric(s, k);
                if v > values[k] || (v == values[k] && s.config.epochs < epochs[k]) {
                    values[k] = v;
                    epochs[k] = s.config.epochs;
                }
            }
        }
        (values, epochs)
    };
    let (base_values, _) = best(baseline);
    let rows = quantifiers
        .iter()
        .map(|q| {
            let (values, epochs) = best(q);
            let is_base = q == baseline;
            let deltas: [Option<f64>; 4] = std::array::from_fn(|k| {
                if is_base {
                    None
                } else {
                    delta_percent(base_values[k], values[k])
                }
            });
            ReportRow {
                label: row_label(layout, q),
                quantifier: *q,
                baseline: is_base,
                values,
                epochs,
                deltas,
            }
        })
        .collect();
    Ok(PoolingReport {
        layout,
        baseline: *baseline,
        rows,
    })
}
