//! `owapool` command-line front end.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use owapool::dataprep::FaultClass;
use owapool::layouts::LayoutName;
use owapool::quantifiers::{Quantifier, QuantifierKind};

#[derive(Debug, Parser)]
#[command(
    name = "owapool",
    version,
    about = "Fault diagnosis with linguistic OWA pooling networks"
)]
pub struct Cli {
    /// File of `key = value` lines used as flag defaults; flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic monitoring corpus with a manifest.
    GenData(GenDataArgs),
    /// Train one model on one cross-validation fold.
    Train(TrainArgs),
    /// Train and evaluate a hyperparameter grid over cross-validation folds.
    Grid(GridArgs),
    /// Score a saved model on the test runs of a fold.
    Evaluate(EvaluateArgs),
    /// Compare pooling quantifiers from grid results.
    Report(ReportArgs),
    /// Diagnose a monitoring stream, one line per completed window.
    Diagnose(DiagnoseArgs),
    /// Print OWA weights and orness of a quantifier.
    Quantifier(QuantifierArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Ten combinations of ten runs per fault type.
    Full,
    /// The small default corpus used for quick end-to-end runs.
    Desk,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value = "corpus")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Fault classes to generate, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_fault_class)]
    pub classes: Option<Vec<FaultClass>>,
    #[arg(long)]
    pub combos: Option<usize>,
    #[arg(long)]
    pub runs_per_combo: Option<usize>,
    #[arg(long)]
    pub nonfault_runs: Option<usize>,
    #[arg(long)]
    pub variables: Option<usize>,
    #[arg(long)]
    pub run_length: Option<usize>,
    #[arg(long)]
    pub severity_min: Option<f64>,
    #[arg(long)]
    pub severity_max: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Corpus location, windowing and cross-validation split.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub folds: u64,
    #[arg(long, default_value_t = 0)]
    pub partition_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "model7", value_parser = parse_layout)]
    pub layout: LayoutName,
    #[arg(long, default_value = "most", value_parser = parse_kind)]
    pub quantifier: QuantifierKind,
    /// Required by atmiddle and atleast, rejected otherwise.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fold held out for testing.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "grid")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "model7", value_parser = parse_layout)]
    pub layouts: Vec<LayoutName>,
    /// Quantifier tokens such as `max,most,atmiddle:0.2`.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "max,average,most,atmiddle:0.2,atleasthalf,atleast:0.75",
        value_parser = parse_quantifier
    )]
    pub quantifiers: Vec<Quantifier>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub lrs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "32,50,64,128,256")]
    pub batches: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "200,500,700")]
    pub epochs: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Folds to run, comma separated; all folds when omitted.
    #[arg(long = "fold", value_delimiter = ',')]
    pub fold: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Do not keep a model file per cell.
    #[arg(long)]
    pub no_checkpoints: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to `stats.json` next to the checkpoint.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub folds: u64,
    #[arg(long, default_value_t = 0)]
    pub partition_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Write the metrics as JSON here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Grid output directory or its `summary.csv`.
    #[arg(long, default_value = "grid")]
    pub results: PathBuf,
    #[arg(long, default_value = "max", value_parser = parse_quantifier)]
    pub baseline: Quantifier,
    #[arg(long, value_parser = parse_layout)]
    pub layout: Option<LayoutName>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to `stats.json` next to the checkpoint.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Monitoring CSV; standard input when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
    /// Stop at the first bad row instead of reporting it and continuing.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct QuantifierArgs {
    #[arg(long, value_parser = parse_kind)]
    pub name: QuantifierKind,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight vector lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub n: Vec<usize>,
}

fn parse_fault_class(s: &str) -> Result<FaultClass, String> {
    match s.parse::<FaultClass>() {
        Ok(FaultClass::NonFault) => Err("non-fault runs are set with --nonfault-runs".into()),
        Ok(c) => Ok(c),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_layout(s: &str) -> Result<LayoutName, String> {
    s.parse().map_err(|e: owapool::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<QuantifierKind, String> {
    s.parse().map_err(|e: owapool::Error| e.to_string())
}

fn parse_quantifier(s: &str) -> Result<Quantifier, String> {
    s.parse().map_err(|e: owapool::Error| e.to_string())
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or flag combinations; exit status 1.
    Usage(String),
    /// Bad data, missing files, failed training; exit status 2.
    Runtime(String),
}

impl From<owapool::Error> for Failure {
    fn from(e: owapool::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::expand_args(raw) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
