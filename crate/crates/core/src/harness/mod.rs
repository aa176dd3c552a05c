//! Training, evaluation, the hyperparameter grid over cross-validation
//! folds, pooling comparison reports and streaming diagnosis.

mod grid;
mod metrics;
mod report;
mod stream;
mod train;

pub use grid::SUMMARY_HEADER;
pub use grid::{
    read_summaries, run_grid, select_best, CellResult, CellStatus, ConfigSummary, GridConfig, GridResult, GridSpec,
};
pub use metrics::Metrics;
pub use report::{delta_percent, format_delta, pooling_report, PoolingReport, ReportRow};
pub use stream::{diagnose_stream, read_stream_rows, DiagnosisEvent, StreamDiagnoser, StreamEvent};
pub use train::{
    train, train_with_checkpoints, LossHistory, TrainConfig, BATCH_SIZES, EPOCH_CHECKPOINTS, LEARNING_RATES,
};

use std::collections::HashMap;

use crate::dataprep::{
    apply_stats, fit_stats, slide_windows, CvPartition, LabelledWindow, MonitoringSeries, StandardizationStats,
};
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

/// Windows packed for the network: `inputs` holds `len` blocks of
/// `variables x window` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    variables: usize,
    window: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(variables: usize, window: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if variables == 0 || window == 0 {
            return Err(Error::invalid("window", "window extents must be positive"));
        }
        if inputs.len() != labels.len() * variables * window {
            return Err(Error::invalid(
                "inputs",
                format!(
                    "{} values do not form {} windows of {variables}x{window}",
                    inputs.len(),
                    labels.len()
                ),
            ));
        }
        Ok(Dataset {
            variables,
            window,
            inputs,
            labels,
        })
    }

    pub fn from_windows(windows: &[LabelledWindow], variables: usize, window: usize) -> Result<Self> {
        let mut inputs = Vec::with_capacity(windows.len() * variables * window);
        for w in windows {
            if w.data.len() != variables * window {
                return Err(Error::invalid("windows", "windows have inconsistent extents"));
            }
            inputs.extend_from_slice(&w.data);
        }
        Dataset::new(
            variables,
            window,
            inputs,
            windows.iter().map(|w| w.label.index()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.variables * self.window;
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Gathers the windows at `indices` into a `[B, 1, V, S]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.variables * self.window);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let input = Tensor::new(vec![indices.len(), 1, self.variables, self.window], data)?;
        Ok((input, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Batch size used for inference.
const EVAL_BATCH: usize = 256;

/// Class probabilities for every window of `data`, in order.
pub fn predict_proba(model: &Network, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (input, _) = data.batch(chunk)?;
        let probs = model.predict_proba(&input)?;
        out.extend(probs.data().chunks_exact(model.layout().classes()).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Index of the largest probability; the first one on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per window.
pub fn predict(model: &Network, data: &Dataset) -> Result<Vec<usize>> {
    Ok(predict_proba(model, data)?.iter().map(|p| argmax(p)).collect())
}

/// Argmax-of-softmax predictions scored against the window labels.
pub fn evaluate(model: &Network, data: &Dataset) -> Result<Metrics> {
    let predicted = predict(model, data)?;
    Metrics::from_predictions(data.labels(), &predicted, model.layout().classes())
}

/// Standardized training and test windows of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: usize,
    pub stats: StandardizationStats,
    pub train: Dataset,
    pub test: Dataset,
    pub test_runs: Vec<String>,
}

/// Standardizes and windows every run of `fold`: statistics are fitted on
/// the training runs only and the test side is checked against them.
/// Windows are ordered by run id, then position.
pub fn prepare_fold(
    runs: &[MonitoringSeries],
    partition: &CvPartition,
    fold: usize,
    size: usize,
    step: usize,
) -> Result<FoldData> {
    if fold >= partition.k {
        return Err(Error::invalid(
            "fold",
            format!("fold {fold} does not exist (k = {})", partition.k),
        ));
    }
    let by_id: HashMap<&str, &MonitoringSeries> = runs.iter().map(|r| (r.run_id.as_str(), r)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&MonitoringSeries>> {
        let mut out = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid("partition", format!("run `{id}` is not loaded")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Ok(out)
    };
    let train_runs = lookup(&partition.train_runs(fold))?;
    let test_runs = lookup(partition.test_runs(fold))?;
    let stats = fit_stats(&train_runs)?;
    stats.ensure_disjoint(test_runs.iter().map(|r| r.run_id.as_str()))?;

    let v = stats.variables.len();
    let windows = |set: &[&MonitoringSeries]| -> Result<Dataset> {
        let mut all = Vec::new();
        for r in set {
            all.extend(slide_windows(&apply_stats(r, &stats)?, size, step)?);
        }
        Dataset::from_windows(&all, v, size)
    };
    Ok(FoldData {
        fold,
        train: windows(&train_runs)?,
        test: windows(&test_runs)?,
        test_runs: test_runs.iter().map(|r| r.run_id.clone()).collect(),
        stats,
    })
}
