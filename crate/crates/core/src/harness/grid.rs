//! Hyperparameter grid over cross-validation folds.
//!
//! Output directory layout:
//!
//! * `grid.json`: the grid specification (a resumed run must match it);
//! * `cells/<cell id>.json`: one record per finished (config, fold) cell;
//! * `checkpoints/<cell id>.ckpt`: trained model of each successful cell;
//! * `cells.csv`, `summary.csv`: per-cell and fold-averaged metrics.
//!
//! A (layout, quantifier, learning rate, batch size, fold) unit is trained
//! once up to the largest epoch count and evaluated at every epoch count of
//! the grid. Units whose cells are all on disk are skipped on resume.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, prepare_fold, train_with_checkpoints, FoldData, Metrics, TrainConfig};
use super::{BATCH_SIZES, EPOCH_CHECKPOINTS, LEARNING_RATES};
use crate::dataprep::{CvPartition, MonitoringSeries};
use crate::error::{Error, Result};
use crate::layouts::{build_layout, LayoutName};
use crate::nn::checkpoint;
use crate::quantifiers::Quantifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layouts: Vec<LayoutName>,
    pub quantifiers: Vec<Quantifier>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub momentum: f64,
    pub seed: u64,
    pub window: usize,
    pub step: usize,
    /// Folds to run; all folds of the partition when empty.
    pub folds: Vec<usize>,
    pub save_checkpoints: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            layouts: vec![LayoutName::Model7],
            quantifiers: Quantifier::standard_set().to_vec(),
            learning_rates: LEARNING_RATES.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            epochs: EPOCH_CHECKPOINTS.to_vec(),
            momentum: 0.9,
            seed: 0,
            window: 4,
            step: 1,
            folds: Vec::new(),
            save_checkpoints: true,
        }
    }
}

impl GridSpec {
    fn validate(&self, partition: &CvPartition) -> Result<()> {
        let empty = |name: &'static str| Error::invalid(name, "the grid needs at least one value");
        if self.layouts.is_empty() {
            return Err(empty("layouts"));
        }
        if self.quantifiers.is_empty() {
            return Err(empty("quantifiers"));
        }
        if self.learning_rates.is_empty() {
            return Err(empty("learning_rates"));
        }
        if self.batch_sizes.is_empty() {
            return Err(empty("batch_sizes"));
        }
        if self.epochs.is_empty() {
            return Err(empty("epochs"));
        }
        if let Some(f) = self.folds.iter().find(|&&f| f >= partition.k) {
            return Err(Error::invalid(
                "folds",
                format!("fold {f} does not exist (k = {})", partition.k),
            ));
        }
        for q in &self.quantifiers {
            q.validate()?;
        }
        Ok(())
    }

    fn fold_list(&self, partition: &CvPartition) -> Vec<usize> {
        if self.folds.is_empty() {
            (0..partition.k).collect()
        } else {
            self.folds.clone()
        }
    }

    /// Configurations in grid order: layout, quantifier, learning rate,
    /// batch size, epochs.
    pub fn configs(&self) -> Vec<GridConfig> {
        let mut out = Vec::new();
        for &layout in &self.layouts {
            for &quantifier in &self.quantifiers {
                for &learning_rate in &self.learning_rates {
                    for &batch_size in &self.batch_sizes {
                        for &epochs in &self.epochs {
                            out.push(GridConfig {
                                layout,
                                quantifier,
                                learning_rate,
                                batch_size,
                                epochs,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub layout: LayoutName,
    pub quantifier: Quantifier,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl GridConfig {
    /// File-name-safe identifier.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_lr{}_b{}_e{}",
            self.layout,
            self.quantifier.token().replace(':', "-"),
            self.learning_rate,
            self.batch_size,
            self.epochs
        )
    }

    fn same_unit(&self, other: &GridConfig) -> bool {
        GridConfig { epochs: 0, ..*self } == GridConfig { epochs: 0, ..*other }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok { metrics: Metrics },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: GridConfig,
    pub fold: usize,
    pub status: CellStatus,
    /// Wall-clock seconds of the training unit that produced the cell.
    pub seconds: f64,
}

impl CellResult {
    pub fn id(&self) -> String {
        format!("{}_f{}", self.config.id(), self.fold)
    }

    pub fn metrics(&self) -> Option<&Metrics> {
        match &self.status {
            CellStatus::Ok { metrics } => Some(metrics),
            CellStatus::Failed { .. } => None,
        }
    }
}

/// Fold-averaged metrics of one configuration; averages run over the
/// successful folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: GridConfig,
    pub folds_ok: usize,
    pub folds_failed: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl ConfigSummary {
    pub fn complete(&self) -> bool {
        self.folds_failed == 0 && self.folds_ok > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<ConfigSummary>,
}

impl GridResult {
    fn from_cells(configs: &[GridConfig], mut cells: Vec<CellResult>) -> Self {
        let order = |c: &GridConfig| configs.iter().position(|x| x == c).unwrap_or(usize::MAX);
        cells.sort_by_key(|c| (order(&c.config), c.fold));
        let summaries = configs
            .iter()
            .map(|config| {
                let mine: Vec<&CellResult> = cells.iter().filter(|c| c.config == *config).collect();
                let ok: Vec<&Metrics> = mine.iter().filter_map(|c| c.metrics()).collect();
                let mean = |f: fn(&Metrics) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                    }
                };
                ConfigSummary {
                    config: *config,
                    folds_ok: ok.len(),
                    folds_failed: mine.len() - ok.len(),
                    accuracy: mean(|m| m.accuracy),
                    macro_precision: mean(|m| m.macro_precision),
                    macro_recall: mean(|m| m.macro_recall),
                    macro_f1: mean(|m| m.macro_f1),
                }
            })
            .collect();
        GridResult { cells, summaries }
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from(
            "layout,quantifier,learning_rate,batch_size,epochs,fold,status,accuracy,macro_precision,macro_recall,macro_f1,error\n",
        );
        for c in &self.cells {
            let g = &c.config;
            let _ = write!(
                out,
                "{},{},{},{},{},{},",
                g.layout,
                g.quantifier.token(),
                g.learning_rate,
                g.batch_size,
                g.epochs,
                c.fold
            );
            match &c.status {
                CellStatus::Ok { metrics: m } => {
                    let _ = writeln!(
                        out,
                        "ok,{},{},{},{},",
                        m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1
                    );
                }
                CellStatus::Failed { error } => {
                    let _ = writeln!(out, "failed,,,,,\"{}\"", error.replace('"', "'"));
                }
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        summaries_csv(&self.summaries)
    }
}

pub const SUMMARY_HEADER: &str =
    "layout,quantifier,learning_rate,batch_size,epochs,folds_ok,folds_failed,accuracy,macro_precision,macro_recall,macro_f1";

fn summaries_csv(summaries: &[ConfigSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summaries {
        let g = &s.config;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            g.layout,
            g.quantifier.token(),
            g.learning_rate,
            g.batch_size,
            g.epochs,
            s.folds_ok,
            s.folds_failed,
            s.accuracy,
            s.macro_precision,
            s.macro_recall,
            s.macro_f1
        );
    }
    out
}

/// Parses a `summary.csv` written by [`run_grid`].
pub fn read_summaries(path: &Path) -> Result<Vec<ConfigSummary>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SUMMARY_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!("summary header must be `{SUMMARY_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: header[col].clone(),
            reason,
        };
        let num = |col: usize| -> Result<f64> {
            rec[col]
                .parse::<f64>()
                .map_err(|_| bad(col, format!("`{}` is not a number", &rec[col])))
        };
        let int = |col: usize| -> Result<usize> {
            rec[col]
                .parse::<usize>()
                .map_err(|_| bad(col, format!("`{}` is not an integer", &rec[col])))
        };
        out.push(ConfigSummary {
            config: GridConfig {
                layout: rec[0].parse().map_err(|e: Error| bad(0, e.to_string()))?,
                quantifier: rec[1].parse().map_err(|e: Error| bad(1, e.to_string()))?,
                learning_rate: num(2)?,
                batch_size: int(3)?,
                epochs: int(4)?,
            },
            folds_ok: int(5)?,
            folds_failed: int(6)?,
            accuracy: num(7)?,
            macro_precision: num(8)?,
            macro_recall: num(9)?,
            macro_f1: num(10)?,
        });
    }
    Ok(out)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_cell(path: &Path) -> Option<CellResult> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Configurations sharing one training run, and the index of their fold
/// in the prepared fold list.
struct Unit {
    configs: Vec<GridConfig>,
    data_idx: usize,
}

fn run_unit(unit: &Unit, spec: &GridSpec, data: &FoldData, out_dir: &Path) -> Result<Vec<CellResult>> {
    let fold = data.fold;
    let cells_dir = out_dir.join("cells");
    let existing: Vec<Option<CellResult>> = unit
        .configs
        .iter()
        .map(|c| load_cell(&cells_dir.join(format!("{}_f{}.json", c.id(), fold))))
        .collect();
    if existing.iter().all(Option::is_some) {
        return Ok(existing.into_iter().flatten().collect());
    }

    let first = unit.configs[0];
    let started = Instant::now();
    let checkpoints: Vec<usize> = unit.configs.iter().map(|c| c.epochs).collect();
    let max_epochs = checkpoints.iter().copied().max().unwrap_or(0);
    let config = TrainConfig {
        learning_rate: first.learning_rate,
        batch_size: first.batch_size,
        epochs: max_epochs,
        momentum: spec.momentum,
        seed: spec.seed,
        layout: first.layout,
        quantifier: first.quantifier,
    };
    let mut done: Vec<CellResult> = Vec::new();
    let outcome = build_layout(
        first.layout,
        first.quantifier,
        data.train.variables(),
        data.train.window(),
        crate::dataprep::FaultClass::COUNT,
    )
    .and_then(|layout| {
        train_with_checkpoints(&layout, &data.train, &config, &checkpoints, |epoch, net| {
            let metrics = evaluate(net, &data.test)?;
            for c in unit.configs.iter().filter(|c| c.epochs == epoch) {
                let cell = CellResult {
                    config: *c,
                    fold,
                    status: CellStatus::Ok {
                        metrics: metrics.clone(),
                    },
                    seconds: started.elapsed().as_secs_f64(),
                };
                if spec.save_checkpoints {
                    checkpoint::save(net, &out_dir.join("checkpoints").join(format!("{}.ckpt", cell.id())))?;
                }
                write_atomic(
                    &cells_dir.join(format!("{}.json", cell.id())),
                    serde_json::to_string_pretty(&cell)?.as_bytes(),
                )?;
                done.push(cell);
            }
            Ok(())
        })
    });
    match outcome {
        Ok(_) => {}
        Err(e @ (Error::Io { .. } | Error::Json(_))) => return Err(e),
        Err(e) => {
            for c in &unit.configs {
                if done.iter().any(|d| d.config == *c) {
                    continue;
                }
                let cell = CellResult {
                    config: *c,
                    fold,
                    status: CellStatus::Failed { error: e.to_string() },
                    seconds: started.elapsed().as_secs_f64(),
                };
                write_atomic(
                    &cells_dir.join(format!("{}.json", cell.id())),
                    serde_json::to_string_pretty(&cell)?.as_bytes(),
                )?;
                done.push(cell);
            }
        }
    }
    Ok(done)
}

/// Trains and evaluates every (configuration, fold) cell of `spec`,
/// persisting results under `out_dir` and reusing cells already there.
/// Training failures are recorded per cell; I/O failures abort the grid.
/// `jobs` bounds the number of units trained concurrently.
pub fn run_grid(
    spec: &GridSpec,
    runs: &[MonitoringSeries],
    partition: &CvPartition,
    out_dir: &Path,
    jobs: usize,
) -> Result<GridResult> {
    spec.validate(partition)?;
    for sub in ["cells", "checkpoints"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let spec_path = out_dir.join("grid.json");
    let spec_json = serde_json::to_string_pretty(spec)?;
    if spec_path.exists() {
        let previous: GridSpec =
            serde_json::from_str(&fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?)?;
        if previous != *spec {
            return Err(Error::invalid(
                "out_dir",
                format!("{} holds results of a different grid", out_dir.display()),
            ));
        }
    } else {
        write_atomic(&spec_path, spec_json.as_bytes())?;
    }

    let folds = spec.fold_list(partition);
    let fold_data: Vec<FoldData> = folds
        .iter()
        .map(|&f| prepare_fold(runs, partition, f, spec.window, spec.step))
        .collect::<Result<_>>()?;

    let configs = spec.configs();
    let mut units: Vec<Unit> = Vec::new();
    for data_idx in 0..fold_data.len() {
        let mut rest: &[GridConfig] = &configs;
        while let Some(head) = rest.first() {
            let n = rest.iter().take_while(|c| c.same_unit(head)).count();
            units.push(Unit {
                configs: rest[..n].to_vec(),
                data_idx,
            });
            rest = &rest[n..];
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let nested: Vec<Vec<CellResult>> = pool.install(|| {
        units
            .par_iter()
            .map(|u| run_unit(u, spec, &fold_data[u.data_idx], out_dir))
            .collect::<Result<_>>()
    })?;
    let result = GridResult::from_cells(&configs, nested.into_iter().flatten().collect());
    write_atomic(&out_dir.join("cells.csv"), result.cells_csv().as_bytes())?;
    write_atomic(&out_dir.join("summary.csv"), result.summary_csv().as_bytes())?;
    Ok(result)
}

/// Index of the best configuration: highest fold-averaged macro F1, then
/// higher macro recall, then fewer epochs, then earlier grid order.
/// Configurations with failed folds are not eligible.
pub fn select_best(results: &[ConfigSummary]) -> Result<usize> {
    if results.is_empty() {
        return Err(Error::invalid("results", "no configurations to select from"));
    }
    let mut best: Option<usize> = None;
    for (i, s) in results.iter().enumerate() {
        if !s.complete() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &results[b];
                (s.macro_f1, s.macro_recall) > (cur.macro_f1, cur.macro_recall)
                    || (s.macro_f1 == cur.macro_f1
                        && s.macro_recall == cur.macro_recall
                        && s.config.epochs < cur.config.epochs)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::invalid("results", "every configuration has failed folds"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(f1: f64, recall: f64, epochs: usize) -> ConfigSummary {
        ConfigSummary {
            config: GridConfig {
                layout: LayoutName::Model7,
                quantifier: Quantifier::Most,
                learning_rate: 0.001,
                batch_size: 64,
                epochs,
            },
            folds_ok: 5,
            folds_failed: 0,
            accuracy: 0.9,
            macro_precision: 0.9,
            macro_recall: recall,
            macro_f1: f1,
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(
            select_best(&[summary(0.90, 0.9, 200), summary(0.92, 0.9, 200)]).unwrap(),
            1
        );
        assert_eq!(
            select_best(&[summary(0.9, 0.88, 200), summary(0.9, 0.91, 200)]).unwrap(),
            1
        );
        assert_eq!(
            select_best(&[summary(0.9, 0.9, 700), summary(0.9, 0.9, 200)]).unwrap(),
            1
        );
        assert_eq!(
            select_best(&[summary(0.9, 0.9, 200), summary(0.9, 0.9, 200)]).unwrap(),
            0
        );
        assert!(select_best(&[]).is_err());
        let mut failed = summary(0.99, 0.99, 200);
        failed.folds_failed = 1;
        assert_eq!(select_best(&[failed, summary(0.5, 0.5, 200)]).unwrap(), 1);
    }

    #[test]
    fn grid_order_and_ids() {
        let spec = GridSpec {
            quantifiers: vec![Quantifier::ThereExists, Quantifier::at_middle(0.2).unwrap()],
            ..GridSpec::default()
        };
        let configs = spec.configs();
        assert_eq!(configs.len(), 2 * 3 * 5 * 3);
        assert_eq!(configs[0].id(), "model7_max_lr0.1_b32_e200");
        assert_eq!(configs[45].id(), "model7_atmiddle-0.2_lr0.1_b32_e200");
        assert!(configs[0].same_unit(&configs[2]) && !configs[0].same_unit(&configs[3]));
    }

    #[test]
    fn summaries_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![summary(0.9, 0.8, 200), summary(1.0 / 3.0, 0.7, 500)];
        let path = dir.path().join("summary.csv");
        fs::write(&path, summaries_csv(&rows)).unwrap();
        assert_eq!(read_summaries(&path).unwrap(), rows);
    }
}
