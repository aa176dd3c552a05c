//! Online diagnosis: a ring buffer of the latest `S` standardized samples,
//! classified every `P` new samples once full.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use super::argmax;
use crate::dataprep::{CsvSchema, FaultClass, StandardizationStats};
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisEvent {
    pub timestamp: String,
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl DiagnosisEvent {
    /// `timestamp,predicted_class,p_0,...,p_{K-1}`.
    pub fn to_csv_line(&self) -> String {
        let name = FaultClass::from_index(self.class).map_or_else(|| self.class.to_string(), |c| c.to_string());
        let mut line = format!("{},{}", self.timestamp, name);
        for p in &self.probabilities {
            let _ = write!(line, ",{p}");
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Diagnosis(DiagnosisEvent),
    Error { message: String },
}

/// One incoming row: timestamp and raw values (`None` for an empty cell).
pub type StreamRow = (String, Vec<Option<f64>>);

pub struct StreamDiagnoser<'a> {
    model: &'a Network,
    stats: &'a StandardizationStats,
    size: usize,
    step: usize,
    buffer: VecDeque<(String, Vec<f64>)>,
    last_raw: Option<Vec<f64>>,
    accepted: usize,
}

impl<'a> StreamDiagnoser<'a> {
    pub fn new(model: &'a Network, stats: &'a StandardizationStats, size: usize, step: usize) -> Result<Self> {
        let layout = model.layout();
        if step == 0 {
            return Err(Error::invalid("step", "window step must be at least 1"));
        }
        if size != layout.window() {
            return Err(Error::invalid(
                "size",
                format!("window size {size} differs from the model's {}", layout.window()),
            ));
        }
        if stats.variables.len() != layout.variables() {
            return Err(Error::invalid(
                "stats",
                format!(
                    "statistics cover {} variables, the model expects {}",
                    stats.variables.len(),
                    layout.variables()
                ),
            ));
        }
        Ok(StreamDiagnoser {
            model,
            stats,
            size,
            step,
            buffer: VecDeque::with_capacity(size),
            last_raw: None,
            accepted: 0,
        })
    }

    /// Feeds one sample. Returns a diagnosis when this sample completes a
    /// window. A rejected row leaves the buffer untouched.
    pub fn push(&mut self, timestamp: &str, values: &[Option<f64>]) -> Result<Option<DiagnosisEvent>> {
        let v = self.stats.variables.len();
        if values.len() != v {
            return Err(Error::invalid(
                "row",
                format!("expected {v} variable values, got {}", values.len()),
            ));
        }
        let mut raw = Vec::with_capacity(v);
        for (j, x) in values.iter().enumerate() {
            match (x, &self.last_raw) {
                (Some(x), _) if x.is_finite() => raw.push(*x),
                (Some(x), _) => {
                    return Err(Error::invalid(
                        "row",
                        format!("`{}` has non-finite value {x}", self.stats.variables[j]),
                    ))
                }
                (None, Some(prev)) => raw.push(prev[j]),
                (None, None) => {
                    return Err(Error::invalid(
                        "row",
                        format!(
                            "`{}` is missing and there is no earlier sample to carry forward",
                            self.stats.variables[j]
                        ),
                    ))
                }
            }
        }
        let mut z = raw.clone();
        self.stats.apply_row(&mut z);
        self.last_raw = Some(raw);
        if self.buffer.len() == self.size {
            self.buffer.pop_front();
        }
        self.buffer.push_back((timestamp.to_string(), z));
        self.accepted += 1;
        if self.accepted < self.size || !(self.accepted - self.size).is_multiple_of(self.step) {
            return Ok(None);
        }
        self.diagnose().map(Some)
    }

    fn diagnose(&self) -> Result<DiagnosisEvent> {
        let v = self.stats.variables.len();
        let s = self.size;
        let mut data = vec![0.0; v * s];
        for (t, (_, row)) in self.buffer.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                data[j * s + t] = *x;
            }
        }
        let probs = self.model.predict_proba(&Tensor::new(vec![1, 1, v, s], data)?)?;
        let probabilities = probs.into_data();
        Ok(DiagnosisEvent {
            timestamp: self.buffer.back().map(|(ts, _)| ts.clone()).unwrap_or_default(),
            class: argmax(&probabilities),
            probabilities,
        })
    }
}

/// Runs a whole row sequence through a [`StreamDiagnoser`]. Row errors
/// become error events and the stream continues.
pub fn diagnose_stream(
    model: &Network,
    stats: &StandardizationStats,
    rows: impl IntoIterator<Item = Result<StreamRow>>,
    size: usize,
    step: usize,
) -> Result<Vec<StreamEvent>> {
    let mut diag = StreamDiagnoser::new(model, stats, size, step)?;
    let mut events = Vec::new();
    for row in rows {
        let outcome = row.and_then(|(ts, values)| diag.push(&ts, &values));
        match outcome {
            Ok(Some(event)) => events.push(StreamEvent::Diagnosis(event)),
            Ok(None) => {}
            Err(e) => events.push(StreamEvent::Error { message: e.to_string() }),
        }
    }
    Ok(events)
}

/// Reads monitoring CSV rows incrementally. The header must carry exactly
/// `variables` (fault columns are allowed and ignored); per-row problems are
/// yielded as errors so the caller can decide whether to continue.
pub fn read_stream_rows<R: Read>(
    reader: R,
    variables: &[String],
    source: &Path,
) -> Result<impl Iterator<Item = Result<StreamRow>>> {
    let csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = csv.into_records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::EmptyInput(source.to_path_buf())),
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    let schema = CsvSchema::from_header(&header, source)?;
    if schema.variables != variables {
        return Err(Error::Schema {
            path: source.to_path_buf(),
            reason: format!(
                "columns {:?} do not match the model's variables {:?}",
                schema.variables, variables
            ),
        });
    }
    let source = source.to_path_buf();
    Ok(records.enumerate().filter_map(move |(i, rec)| {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => return Some(Err(e.into())),
        };
        let fields: Vec<&str> = rec.iter().collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            return None;
        }
        Some(schema.parse_row(&fields, row, &source))
    }))
}
