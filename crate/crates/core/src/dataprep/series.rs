//! Monitoring CSV files.
//!
//! Header: `timestamp,<var_1>,...,<var_V>[,fault_class,fault_onset_index,fault_magnitude]`.
//! Timestamps are ISO-8601 date-times or integer sample indices. An empty
//! variable cell is a missing value, filled forward within the run and then
//! with the variable mean; any other non-numeric text (including `NaN`) is
//! rejected.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling period assumed when timestamps are plain sample indices.
pub const DEFAULT_PERIOD_MINUTES: f64 = 15.0;

pub const FAULT_COLUMNS: [&str; 3] = ["fault_class", "fault_onset_index", "fault_magnitude"];

/// Diagnosis classes; the discriminant is the network's class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultClass {
    NonFault = 0,
    BR1 = 1,
    QrQw = 2,
    QCaD = 3,
    Kla = 4,
    O2 = 5,
}

impl FaultClass {
    pub const COUNT: usize = 6;
    pub const ALL: [FaultClass; 6] = [
        FaultClass::NonFault,
        FaultClass::BR1,
        FaultClass::QrQw,
        FaultClass::QCaD,
        FaultClass::Kla,
        FaultClass::O2,
    ];
    pub const FAULTS: [FaultClass; 5] = [
        FaultClass::BR1,
        FaultClass::QrQw,
        FaultClass::QCaD,
        FaultClass::Kla,
        FaultClass::O2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultClass::NonFault => "NonFault",
            FaultClass::BR1 => "BR1",
            FaultClass::QrQw => "QrQw",
            FaultClass::QCaD => "QCaD",
            FaultClass::Kla => "Kla",
            FaultClass::O2 => "O2",
        }
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "");
        FaultClass::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| {
                Error::invalid(
                    "fault_class",
                    format!("unknown class `{s}` (expected NonFault, BR1, QrQw, QCaD, Kla or O2)"),
                )
            })
    }
}

/// Run-level fault annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultAnnotation {
    pub class: FaultClass,
    pub onset: usize,
    pub magnitude: f64,
}

/// One monitoring run: `T` samples of `V` variables, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringSeries {
    pub run_id: String,
    pub variables: Vec<String>,
    pub period_minutes: f64,
    pub timestamps: Vec<String>,
    pub samples: Vec<f64>,
    pub fault: Option<FaultAnnotation>,
}

impl MonitoringSeries {
    /// Builds a series, checking the shape and annotation invariants.
    pub fn new(
        run_id: impl Into<String>,
        variables: Vec<String>,
        period_minutes: f64,
        timestamps: Vec<String>,
        samples: Vec<f64>,
        fault: Option<FaultAnnotation>,
    ) -> Result<Self> {
        let v = variables.len();
        let t = timestamps.len();
        if v == 0 {
            return Err(Error::invalid("variables", "at least one variable is required"));
        }
        if t == 0 {
            return Err(Error::invalid("samples", "at least one sample is required"));
        }
        if samples.len() != t * v {
            return Err(Error::invalid(
                "samples",
                format!("expected {t} x {v} values, got {}", samples.len()),
            ));
        }
        if !(period_minutes > 0.0 && period_minutes.is_finite()) {
            return Err(Error::invalid("period_minutes", "sampling period must be positive"));
        }
        if let Some(f) = &fault {
            if f.onset >= t {
                return Err(Error::invalid(
                    "fault_onset_index",
                    format!("onset {} is outside the run of {t} samples", f.onset),
                ));
            }
        }
        Ok(MonitoringSeries {
            run_id: run_id.into(),
            variables,
            period_minutes,
            timestamps,
            samples,
            fault,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let v = self.n_vars();
        &self.samples[t * v..(t + 1) * v]
    }

    /// Class of the whole run (`NonFault` when unannotated).
    pub fn class(&self) -> FaultClass {
        self.fault.map_or(FaultClass::NonFault, |f| f.class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stamp {
    Index(i64),
    Time(NaiveDateTime),
}

fn parse_stamp(s: &str) -> Option<Stamp> {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Some(Stamp::Index(i));
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(Stamp::Time(dt.naive_utc()));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(Stamp::Time)
}

/// Column layout of a monitoring CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub variables: Vec<String>,
    pub annotated: bool,
}

impl CsvSchema {
    /// Validates a header row.
    pub fn from_header(header: &[&str], path: &Path) -> Result<Self> {
        let schema_err = |reason: String| Error::Schema {
            path: path.to_path_buf(),
            reason,
        };
        match header.first() {
            Some(&"timestamp") => {}
            Some(other) => return Err(schema_err(format!("first column must be `timestamp`, found `{other}`"))),
            None => return Err(schema_err("missing column `timestamp`".into())),
        }
        let fault_pos: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| FAULT_COLUMNS.contains(h))
            .map(|(i, _)| i)
            .collect();
        let annotated = !fault_pos.is_empty();
        let var_end = if annotated {
            let start = header.len().saturating_sub(3);
            for (k, name) in FAULT_COLUMNS.iter().enumerate() {
                if header.get(start + k) != Some(name) || start == 0 {
                    if !header.contains(name) {
                        return Err(schema_err(format!("missing column `{name}`")));
                    }
                    return Err(schema_err(format!(
                        "fault columns must be the last three, in the order {}",
                        FAULT_COLUMNS.join(",")
                    )));
                }
            }
            start
        } else {
            header.len()
        };
        let variables: Vec<String> = header[1..var_end].iter().map(|s| s.to_string()).collect();
        if variables.is_empty() {
            return Err(schema_err("no variable columns".into()));
        }
        for (i, name) in variables.iter().enumerate() {
            if name.is_empty() {
                return Err(schema_err(format!("variable column {} has an empty name", i + 1)));
            }
            if variables[..i].contains(name) {
                return Err(schema_err(format!("duplicate column `{name}`")));
            }
        }
        Ok(CsvSchema { variables, annotated })
    }

    pub fn width(&self) -> usize {
        1 + self.variables.len() + if self.annotated { 3 } else { 0 }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["timestamp".to_string()];
        h.extend(self.variables.iter().cloned());
        if self.annotated {
            h.extend(FAULT_COLUMNS.iter().map(|s| s.to_string()));
        }
        h
    }

    /// Parses the timestamp and variable cells of one data row. Missing
    /// cells come back as `None`. `row` is the 1-based data row number used
    /// in error messages.
    pub fn parse_row(&self, record: &[&str], row: usize, path: &Path) -> Result<(String, Vec<Option<f64>>)> {
        if record.len() != self.width() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                reason: format!("row {row} has {} fields, expected {}", record.len(), self.width()),
            });
        }
        let parse_err = |column: &str, reason: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            reason,
        };
        let ts = record[0].trim();
        if parse_stamp(ts).is_none() {
            return Err(parse_err(
                "timestamp",
                format!("`{ts}` is neither ISO-8601 nor an integer index"),
            ));
        }
        let mut values = Vec::with_capacity(self.variables.len());
        for (name, cell) in self.variables.iter().zip(&record[1..]) {
            let cell = cell.trim();
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => return Err(parse_err(name, format!("`{cell}` is not a finite number"))),
            }
        }
        Ok((ts.to_string(), values))
    }
}

fn fill_missing(values: &mut [Option<f64>], t: usize, v: usize, path: &Path) -> Result<Vec<f64>> {
    for j in 0..v {
        let observed: Vec<f64> = (0..t).filter_map(|i| values[i * v + j]).collect();
        if observed.is_empty() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                reason: format!("variable column {} has no values", j + 1),
            });
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let mut last = None;
        for i in 0..t {
            match values[i * v + j] {
                Some(x) => last = Some(x),
                None => values[i * v + j] = Some(last.unwrap_or(mean)),
            }
        }
    }
    Ok(values.iter().map(|x| x.expect("filled above")).collect())
}

fn check_timestamps(stamps: &[String], path: &Path) -> Result<f64> {
    let parsed: Vec<Stamp> = stamps
        .iter()
        .map(|s| parse_stamp(s).expect("validated per row"))
        .collect();
    let bad = |row: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: "timestamp".into(),
        reason,
    };
    match parsed[0] {
        Stamp::Index(_) => {
            for (i, pair) in parsed.windows(2).enumerate() {
                match pair {
                    [Stamp::Index(a), Stamp::Index(b)] if *b == a + 1 => {}
                    [Stamp::Index(_), Stamp::Index(_)] => {
                        return Err(bad(i + 2, "sample indices must increase by exactly 1".into()))
                    }
                    _ => return Err(bad(i + 2, "mixed index and date-time timestamps".into())),
                }
            }
            Ok(DEFAULT_PERIOD_MINUTES)
        }
        Stamp::Time(_) => {
            let mut period = None;
            for (i, pair) in parsed.windows(2).enumerate() {
                let (Stamp::Time(a), Stamp::Time(b)) = (pair[0], pair[1]) else {
                    return Err(bad(i + 2, "mixed index and date-time timestamps".into()));
                };
                let step = (b - a).num_seconds();
                if step <= 0 {
                    return Err(bad(i + 2, "timestamps must be strictly increasing".into()));
                }
                match period {
                    None => period = Some(step),
                    Some(p) if p == step => {}
                    Some(p) => {
                        return Err(bad(
                            i + 2,
                            format!("sampling step of {step} s differs from the period of {p} s"),
                        ))
                    }
                }
            }
            Ok(period.map_or(DEFAULT_PERIOD_MINUTES, |p| p as f64 / 60.0))
        }
    }
}

/// Loads one monitoring run. The run id is the file stem.
pub fn load_series(path: &Path) -> Result<MonitoringSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text, path)
}

/// Parses CSV text; `path` is used for the run id and error messages.
pub fn parse_series(text: &str, path: &Path) -> Result<MonitoringSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::EmptyInput(path.to_path_buf())),
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    let schema = CsvSchema::from_header(&header, path)?;
    let v = schema.variables.len();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut annotation: Option<(String, String, String)> = None;
    for (i, record) in records.enumerate() {
        let record = record?;
        let row = i + 1;
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let (ts, vals) = schema.parse_row(&fields, row, path)?;
        timestamps.push(ts);
        values.extend(vals);
        if schema.annotated {
            let tail = &fields[fields.len() - 3..];
            let current = (
                tail[0].trim().to_string(),
                tail[1].trim().to_string(),
                tail[2].trim().to_string(),
            );
            match &annotation {
                None => annotation = Some(current),
                Some(prev) if *prev == current => {}
                Some(_) => {
                    return Err(Error::Schema {
                        path: path.to_path_buf(),
                        reason: format!("fault columns change at row {row}; they must be constant per file"),
                    })
                }
            }
        }
    }
    let t = timestamps.len();
    if t == 0 {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let period = check_timestamps(&timestamps, path)?;
    let samples = fill_missing(&mut values, t, v, path)?;

    let fault = match annotation {
        Some((class, onset, magnitude)) if !class.is_empty() => {
            let parse_err = |column: &str, reason: String| Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: column.to_string(),
                reason,
            };
            let class: FaultClass = class
                .parse()
                .map_err(|e: Error| parse_err("fault_class", e.to_string()))?;
            let onset: usize = onset
                .parse()
                .map_err(|_| parse_err("fault_onset_index", format!("`{onset}` is not a sample index")))?;
            let magnitude: f64 = match magnitude.parse::<f64>() {
                Ok(m) if m.is_finite() => m,
                _ => {
                    return Err(parse_err(
                        "fault_magnitude",
                        format!("`{magnitude}` is not a finite number"),
                    ))
                }
            };
            if class == FaultClass::NonFault {
                None
            } else {
                Some(FaultAnnotation {
                    class,
                    onset,
                    magnitude,
                })
            }
        }
        _ => None,
    };

    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    MonitoringSeries::new(run_id, schema.variables, period, timestamps, samples, fault).map_err(|e| match e {
        Error::InvalidArgument { reason, .. } => Error::Schema {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

/// Writes `series` in the monitoring CSV format. Fault columns are written
/// when the series is annotated. Values use the shortest round-trip
/// representation, so reloading is bit-exact.
pub fn write_series(series: &MonitoringSeries, path: &Path) -> Result<()> {
    let mut out = String::new();
    let schema = CsvSchema {
        variables: series.variables.clone(),
        annotated: series.fault.is_some(),
    };
    out.push_str(&schema.header().join(","));
    out.push('\n');
    for (t, ts) in series.timestamps.iter().enumerate() {
        out.push_str(ts);
        for x in series.row(t) {
            out.push(',');
            out.push_str(&x.to_string());
        }
        if let Some(f) = &series.fault {
            out.push_str(&format!(",{},{},{}", f.class, f.onset, f.magnitude));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
