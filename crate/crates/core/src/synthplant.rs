//! Synthetic plant monitoring runs with injected faults.
//!
//! Every channel is a positive baseline plus a fixed linear mix of latent
//! factors (a diurnal sinusoid and AR(1) processes) plus Gaussian sensor
//! noise. Faults alter the noise-free signal of a class-specific channel
//! group from the onset sample onward:
//!
//! | class | signature | channels (slot `k` is channel `k * V / 8`) |
//! |-------|-----------|----------|
//! | BR1   | drift ramping to `+m` over [`DRIFT_RAMP`] samples | slots 0, 1 |
//! | QrQw  | bias `+m` | slots 2, 3 |
//! | QCaD  | bias `+m` | slot 4 |
//! | Kla   | gain `x * (1 + m)` | slots 5, 6 |
//! | O2    | stuck at the onset reading plus `m`, noise-free | slot 7 |

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::{load_series, write_series, FaultAnnotation, FaultClass, MonitoringSeries, RunRecord};
use crate::error::{Error, Result};

/// Samples over which a drift fault reaches its full magnitude.
pub const DRIFT_RAMP: usize = 8;

/// Gain magnitudes are this fraction of the corpus severity, so that a gain
/// fault on a channel near the mean baseline moves it by about the severity.
pub const GAIN_PER_SEVERITY: f64 = 0.25;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub variables: usize,
    pub latent_factors: usize,
    pub mixing_seed: u64,
    /// Diurnal period in samples (96 at 15-minute sampling).
    pub diurnal_period: usize,
    pub ar_coefficient: f64,
    pub noise_sigma: f64,
    pub period_minutes: u32,
    pub run_length: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            variables: 12,
            latent_factors: 4,
            mixing_seed: 2024,
            diurnal_period: 96,
            ar_coefficient: 0.9,
            noise_sigma: 0.1,
            period_minutes: 15,
            run_length: 288,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variables == 0 {
            return Err(Error::invalid("variables", "at least one variable is required"));
        }
        if self.latent_factors == 0 {
            return Err(Error::invalid(
                "latent_factors",
                "at least one latent factor is required",
            ));
        }
        if self.diurnal_period == 0 {
            return Err(Error::invalid("diurnal_period", "must be at least one sample"));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient.abs()) {
            return Err(Error::invalid("ar_coefficient", "must lie in (-1, 1)"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be finite and non-negative"));
        }
        if self.period_minutes == 0 {
            return Err(Error::invalid("period_minutes", "must be positive"));
        }
        if self.run_length == 0 {
            return Err(Error::invalid("run_length", "must be at least one sample"));
        }
        Ok(())
    }

    pub fn variable_names(&self) -> Vec<String> {
        (0..self.variables).map(|j| format!("x{:03}", j + 1)).collect()
    }

    /// Fixed plant structure: per-channel baselines and the `V x F` mixing
    /// matrix (rows of unit norm).
    fn structure(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mixing_seed);
        let baselines: Vec<f64> = (0..self.variables).map(|_| rng.random_range(2.0..6.0)).collect();
        let f = self.latent_factors;
        let mut mixing = vec![0.0; self.variables * f];
        for row in mixing.chunks_exact_mut(f) {
            for a in row.iter_mut() {
                *a = rng.sample(StandardNormal);
            }
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            row.iter_mut().for_each(|a| *a /= norm);
        }
        (baselines, mixing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Bias,
    Drift,
    StuckAt,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub class: FaultClass,
    pub channels: Vec<usize>,
    pub signature: Signature,
    pub onset: usize,
    pub magnitude: f64,
}

fn slots(class: FaultClass) -> &'static [usize] {
    match class {
        FaultClass::NonFault => &[],
        FaultClass::BR1 => &[0, 1],
        FaultClass::QrQw => &[2, 3],
        FaultClass::QCaD => &[4],
        FaultClass::Kla => &[5, 6],
        FaultClass::O2 => &[7],
    }
}

impl FaultSpec {
    /// The fixed signature and channel group of `class` on a `variables`-channel plant.
    pub fn for_class(class: FaultClass, variables: usize, onset: usize, magnitude: f64) -> Result<Self> {
        let signature = match class {
            FaultClass::NonFault => return Err(Error::invalid("class", "NonFault runs carry no fault specification")),
            FaultClass::BR1 => Signature::Drift,
            FaultClass::QrQw | FaultClass::QCaD => Signature::Bias,
            FaultClass::Kla => Signature::Gain,
            FaultClass::O2 => Signature::StuckAt,
        };
        let mut channels: Vec<usize> = slots(class).iter().map(|s| s * variables / 8).collect();
        channels.dedup();
        Ok(FaultSpec {
            class,
            channels,
            signature,
            onset,
            magnitude,
        })
    }

    fn validate(&self, config: &PlantConfig) -> Result<()> {
        if self.onset >= config.run_length {
            return Err(Error::invalid(
                "onset",
                format!(
                    "onset {} is outside the run of {} samples",
                    self.onset, config.run_length
                ),
            ));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::invalid("magnitude", "must be positive and finite"));
        }
        if self.channels.is_empty() || self.channels.iter().any(|&c| c >= config.variables) {
            return Err(Error::invalid(
                "channels",
                "affected channels must be a non-empty subset of the plant's",
            ));
        }
        if self.class == FaultClass::NonFault {
            return Err(Error::invalid("class", "NonFault is not a fault"));
        }
        Ok(())
    }

    /// Applies the signature to one noise-free channel trace.
    fn apply(&self, trace: &mut [f64]) {
        let m = self.magnitude;
        let held = trace[self.onset] + m;
        for (t, x) in trace.iter_mut().enumerate().skip(self.onset) {
            *x = match self.signature {
                Signature::Bias => *x + m,
                Signature::Drift => *x + m * ((t - self.onset + 1) as f64 / DRIFT_RAMP as f64).min(1.0),
                Signature::Gain => *x * (1.0 + m),
                Signature::StuckAt => held,
            };
        }
    }
}

/// Noise-free channel traces (`[V][T]`) before any fault is applied.
fn clean_traces(config: &PlantConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let (baselines, mixing) = config.structure();
    let (t_len, f) = (config.run_length, config.latent_factors);
    let phi = config.ar_coefficient;
    let innovation = (1.0 - phi * phi).sqrt();
    let mut factors = vec![vec![0.0; t_len]; f];
    for t in 0..t_len {
        factors[0][t] = (2.0 * PI * t as f64 / config.diurnal_period as f64).sin();
    }
    for factor in factors.iter_mut().skip(1) {
        let mut state: f64 = rng.sample(StandardNormal);
        for x in factor.iter_mut() {
            *x = state;
            let e: f64 = rng.sample(StandardNormal);
            state = phi * state + innovation * e;
        }
    }
    (0..config.variables)
        .map(|j| {
            let row = &mixing[j * f..(j + 1) * f];
            (0..t_len)
                .map(|t| baselines[j] + row.iter().zip(&factors).map(|(a, fac)| a * fac[t]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn timestamps(config: &PlantConfig) -> Vec<String> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    (0..config.run_length)
        .map(|t| {
            (start + Duration::minutes(config.period_minutes as i64 * t as i64))
                .format("%Y-%m-%dT%H:%M:%S")
                .to_string()
        })
        .collect()
}

fn assemble(
    config: &PlantConfig,
    run_id: &str,
    traces: Vec<Vec<f64>>,
    fault: Option<&FaultSpec>,
) -> Result<MonitoringSeries> {
    let t_len = config.run_length;
    let v = config.variables;
    let mut samples = vec![0.0; t_len * v];
    for (j, trace) in traces.iter().enumerate() {
        for (t, x) in trace.iter().enumerate() {
            samples[t * v + j] = *x;
        }
    }
    MonitoringSeries::new(
        run_id,
        config.variable_names(),
        config.period_minutes as f64,
        timestamps(config),
        samples,
        fault.map(|f| FaultAnnotation {
            class: f.class,
            onset: f.onset,
            magnitude: f.magnitude,
        }),
    )
}

/// Noise-free signal of a run, with the fault applied when given. Exposed
/// so the signature laws can be checked without sensor noise.
pub fn generate_clean_run(config: &PlantConfig, fault: Option<&FaultSpec>, seed: u64) -> Result<MonitoringSeries> {
    config.validate()?;
    if let Some(f) = fault {
        f.validate(config)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = clean_traces(config, &mut rng);
    if let Some(f) = fault {
        for &c in &f.channels {
            f.apply(&mut traces[c]);
        }
    }
    assemble(config, &format!("run_{seed}"), traces, fault)
}

/// One run: the clean signal of [`generate_clean_run`] plus sensor noise.
/// A stuck channel reads its held value exactly from the onset onward.
pub fn generate_run(config: &PlantConfig, fault: Option<&FaultSpec>, seed: u64) -> Result<MonitoringSeries> {
    config.validate()?;
    if let Some(f) = fault {
        f.validate(config)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = clean_traces(config, &mut rng);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    for (j, trace) in traces.iter_mut().enumerate() {
        let frozen_from = match fault {
            Some(f) if f.signature == Signature::StuckAt && f.channels.contains(&j) => f.onset,
            _ => usize::MAX,
        };
        if let Some(f) = fault.filter(|f| f.channels.contains(&j)) {
            f.apply(trace);
        }
        for (t, x) in trace.iter_mut().enumerate() {
            let e = noise.sample(&mut rng);
            if t < frozen_from {
                *x += e;
            }
        }
    }
    assemble(config, &format!("run_{seed}"), traces, fault)
}

/// Per-run seed derived from the master seed and the run id alone.
pub fn run_seed(master: u64, run_id: &str) -> u64 {
    // FNV-1a over the id, then a SplitMix64 finalizer over the combination.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in run_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ master.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub plant: PlantConfig,
    pub classes: Vec<FaultClass>,
    pub combos: usize,
    pub runs_per_combo: usize,
    pub nonfault_runs: usize,
    /// Fault severity range spread over the combinations.
    pub severity: (f64, f64),
    pub seed: u64,
}

/// The default corpus is sized for a full five-fold model7 run on one core:
/// one run per combination and fold, short runs, clearly separated faults.
impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            plant: PlantConfig {
                run_length: 16,
                ..PlantConfig::default()
            },
            classes: FaultClass::FAULTS.to_vec(),
            combos: 2,
            runs_per_combo: 5,
            nonfault_runs: 5,
            severity: (3.0, 6.0),
            seed: 1,
        }
    }
}

impl CorpusSpec {
    /// Ten combinations of ten day-long runs per fault type, with softer
    /// faults. About sixty-five times the training cost of the default.
    pub fn full() -> Self {
        CorpusSpec {
            plant: PlantConfig {
                run_length: 96,
                ..PlantConfig::default()
            },
            combos: 10,
            runs_per_combo: 10,
            severity: (0.5, 2.0),
            ..CorpusSpec::default()
        }
    }

    /// `(onset, magnitude)` of every combination of `class`. Onsets are
    /// spread evenly over the middle half of the run; severities are
    /// interleaved so early and late faults both see soft and severe cases.
    pub fn combinations(&self, class: FaultClass) -> Vec<(usize, f64)> {
        let n = self.combos;
        let l = self.plant.run_length;
        let (lo, hi) = self.severity;
        (0..n)
            .map(|i| {
                let onset = if n == 1 { l / 2 } else { l / 4 + i * (l / 2) / (n - 1) };
                let level = if i % 2 == 0 { i / 2 } else { n - 1 - i / 2 };
                let severity = if n == 1 {
                    (lo + hi) / 2.0
                } else {
                    lo + (hi - lo) * level as f64 / (n - 1) as f64
                };
                let magnitude = if class == FaultClass::Kla {
                    severity * GAIN_PER_SEVERITY
                } else {
                    severity
                };
                (onset.min(l - 1), magnitude)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if self.classes.contains(&FaultClass::NonFault) {
            return Err(Error::invalid(
                "classes",
                "NonFault runs are set by the non-fault run count",
            ));
        }
        let (lo, hi) = self.severity;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("severity", "need 0 < low <= high"));
        }
        if !self.classes.is_empty() && (self.combos == 0 || self.runs_per_combo == 0) {
            return Err(Error::invalid(
                "combos",
                "combinations and runs per combination must be positive",
            ));
        }
        Ok(())
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class: FaultClass,
    pub combo: usize,
    pub run: usize,
    pub onset: Option<usize>,
    pub magnitude: Option<f64>,
}

impl ManifestEntry {
    pub fn run_id(&self) -> String {
        Path::new(&self.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn record(&self) -> RunRecord {
        RunRecord {
            run_id: self.run_id(),
            class: self.class,
            combo: self.combo,
        }
    }
}

/// All runs of a corpus in manifest order, without generating them.
pub fn plan_corpus(spec: &CorpusSpec) -> Result<Vec<(ManifestEntry, Option<FaultSpec>)>> {
    spec.validate()?;
    let mut plan = Vec::new();
    for run in 0..spec.nonfault_runs {
        plan.push((
            ManifestEntry {
                path: format!("nonfault_r{run:02}.csv"),
                class: FaultClass::NonFault,
                combo: 0,
                run,
                onset: None,
                magnitude: None,
            },
            None,
        ));
    }
    for &class in &spec.classes {
        for (combo, (onset, magnitude)) in spec.combinations(class).into_iter().enumerate() {
            let fault = FaultSpec::for_class(class, spec.plant.variables, onset, magnitude)?;
            for run in 0..spec.runs_per_combo {
                plan.push((
                    ManifestEntry {
                        path: format!("{}_c{combo:02}_r{run:02}.csv", class.name().to_ascii_lowercase()),
                        class,
                        combo,
                        run,
                        onset: Some(onset),
                        magnitude: Some(magnitude),
                    },
                    Some(fault.clone()),
                ));
            }
        }
    }
    Ok(plan)
}

/// Writes every run of `spec` plus `manifest.csv` into `dir`.
pub fn generate_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let plan = plan_corpus(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    plan.par_iter().try_for_each(|(entry, fault)| {
        let run_id = entry.run_id();
        let mut series = generate_run(&spec.plant, fault.as_ref(), run_seed(spec.seed, &run_id))?;
        series.run_id = run_id;
        write_series(&series, &dir.join(&entry.path))
    })?;
    let entries: Vec<ManifestEntry> = plan.into_iter().map(|(e, _)| e).collect();
    write_manifest(&entries, &dir.join(MANIFEST_FILE))?;
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut out = String::from("path,class,combo,run,onset,magnitude\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.path,
            e.class,
            e.combo,
            e.run,
            e.onset.map(|o| o.to_string()).unwrap_or_default(),
            e.magnitude.map(|m| m.to_string()).unwrap_or_default()
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let expected = ["path", "class", "combo", "run", "onset", "magnitude"];
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!("manifest header must be `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let bad = |column: &str, reason: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            reason,
        };
        let int = |k: usize, name: &str| -> Result<usize> {
            record[k]
                .parse()
                .map_err(|_| bad(name, format!("`{}` is not an integer", &record[k])))
        };
        let class: FaultClass = record[1].parse().map_err(|e: Error| bad("class", e.to_string()))?;
        let onset = if record[4].is_empty() {
            None
        } else {
            Some(int(4, "onset")?)
        };
        let magnitude = if record[5].is_empty() {
            None
        } else {
            Some(
                record[5]
                    .parse::<f64>()
                    .map_err(|_| bad("magnitude", format!("`{}` is not a number", &record[5])))?,
            )
        };
        out.push(ManifestEntry {
            path: record[0].to_string(),
            class,
            combo: int(2, "combo")?,
            run: int(3, "run")?,
            onset,
            magnitude,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(out)
}

/// Loads every run listed in `dir/manifest.csv`, in manifest order.
pub fn load_corpus(dir: &Path) -> Result<Vec<(ManifestEntry, MonitoringSeries)>> {
    let entries = read_manifest(&dir.join(MANIFEST_FILE))?;
    entries
        .into_par_iter()
        .map(|e| {
            let path: PathBuf = dir.join(&e.path);
            let series = load_series(&path)?;
            Ok((e, series))
        })
        .collect()
}
