use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion matrix (rows = truth, columns = prediction) and the indexes
/// derived from it.
///
/// Macro averages run over the classes that occur in the truth or the
/// predictions; a class absent from both has F1 0 and is left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub present: Vec<bool>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion", "matrix must be square and non-empty"));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let mut precision = vec![0.0; k];
        let mut recall = vec![0.0; k];
        let mut f1 = vec![0.0; k];
        let mut present = vec![false; k];
        for c in 0..k {
            let row: u64 = confusion[c].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[c]).sum();
            let tp = confusion[c][c];
            precision[c] = ratio(tp, col);
            recall[c] = ratio(tp, row);
            let (p, r) = (precision[c], recall[c]);
            f1[c] = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            present[c] = row > 0 || col > 0;
        }
        let n_present = present.iter().filter(|&&p| p).count();
        let macro_of = |v: &[f64]| {
            if n_present == 0 {
                0.0
            } else {
                v.iter().zip(&present).filter(|(_, &p)| p).map(|(x, _)| x).sum::<f64>() / n_present as f64
            }
        };
        Ok(Metrics {
            accuracy: ratio(trace, total),
            macro_precision: macro_of(&precision),
            macro_recall: macro_of(&recall),
            macro_f1: macro_of(&f1),
            precision,
            recall,
            f1,
            present,
            confusion,
        })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid("predicted", "truth and prediction lengths differ"));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::invalid(
                    "truth",
                    format!("class index {} is out of range", t.max(p)),
                ));
            }
            confusion[t][p] += 1;
        }
        Metrics::from_confusion(confusion)
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}
