//! Monitoring data preparation: CSV ingestion, standardization, sliding
//! windows and the cross-validation partition.

mod partition;
mod series;
mod stats;
mod windows;

pub use partition::{cv_partition, CvPartition, RunRecord};
pub use series::{
    load_series, parse_series, write_series, CsvSchema, FaultAnnotation, FaultClass, MonitoringSeries,
    DEFAULT_PERIOD_MINUTES, FAULT_COLUMNS,
};
pub use stats::{apply_stats, destandardize, fit_stats, StandardizationStats, SIGMA_FLOOR};
pub use windows::{slide_windows, window_count, window_data, window_label, LabelledWindow};
