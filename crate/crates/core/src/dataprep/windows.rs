//! Sliding, overlapping, labelled windows over one run.

use super::{FaultClass, MonitoringSeries};
use crate::error::{Error, Result};

/// `V x S` block of consecutive samples, variable-major
/// (`data[v * S + s]`), ready to be fed as one `[1, V, S]` network input.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledWindow {
    pub run_id: String,
    pub start: usize,
    pub data: Vec<f64>,
    pub label: FaultClass,
    pub end_timestamp: String,
}

/// Number of windows of size `size` and step `step` over `len` samples.
pub fn window_count(len: usize, size: usize, step: usize) -> usize {
    if size == 0 || step == 0 || len < size {
        0
    } else {
        (len - size) / step + 1
    }
}

/// Label of the window `[start, start + size)`: the run's fault class once
/// the window reaches the onset sample, `NonFault` otherwise.
pub fn window_label(series: &MonitoringSeries, start: usize, size: usize) -> FaultClass {
    match series.fault {
        Some(f) if start + size > f.onset => f.class,
        _ => FaultClass::NonFault,
    }
}

/// Copies samples `[start, start + size)` into variable-major order.
pub fn window_data(series: &MonitoringSeries, start: usize, size: usize) -> Vec<f64> {
    let v = series.n_vars();
    let mut data = vec![0.0; v * size];
    for s in 0..size {
        for (j, x) in series.row(start + s).iter().enumerate() {
            data[j * size + s] = *x;
        }
    }
    data
}

/// Windows `i = 0, 1, ...` covering samples `[i * step, i * step + size)`.
pub fn slide_windows(series: &MonitoringSeries, size: usize, step: usize) -> Result<Vec<LabelledWindow>> {
    if size == 0 {
        return Err(Error::invalid("size", "window size must be at least 1"));
    }
    if step == 0 {
        return Err(Error::invalid("step", "window step must be at least 1"));
    }
    if series.len() < size {
        return Err(Error::invalid(
            "size",
            format!("window size {size} exceeds the run length {}", series.len()),
        ));
    }
    Ok((0..window_count(series.len(), size, step))
        .map(|i| {
            let start = i * step;
            LabelledWindow {
                run_id: series.run_id.clone(),
                start,
                data: window_data(series, start, size),
                label: window_label(series, start, size),
                end_timestamp: series.timestamps[start + size - 1].clone(),
            }
        })
        .collect())
}
