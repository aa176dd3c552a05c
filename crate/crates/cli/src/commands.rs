use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use owapool::dataprep::StandardizationStats;
use owapool::dataprep::{apply_stats, cv_partition, slide_windows, CvPartition, FaultClass, MonitoringSeries};
use owapool::harness::{
    self, pooling_report, read_stream_rows, read_summaries, run_grid, select_best, CellStatus, Dataset, GridSpec,
    Metrics, StreamDiagnoser, TrainConfig,
};
use owapool::layouts::build_layout;
use owapool::nn::{checkpoint, Network};
use owapool::quantifiers::{discrete_orness, quantifier_orness, rim_weights, Quantifier, QuantifierKind};
use owapool::synthplant::{generate_corpus, load_corpus, CorpusSpec, MANIFEST_FILE};

use crate::{
    Command, DataArgs, DiagnoseArgs, EvaluateArgs, Failure, GenDataArgs, GridArgs, Preset, QuantifierArgs, ReportArgs,
    TrainArgs,
};

type CmdResult = Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Quantifier(a) => quantifier(a),
    }
}

fn usage(e: owapool::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Builds a quantifier from a name and an optional `--alpha`, which must be
/// given exactly for the parameterized quantifiers.
fn quantifier_from(kind: QuantifierKind, alpha: Option<f64>) -> Result<Quantifier, Failure> {
    match (kind.takes_alpha(), alpha) {
        (true, None) => Err(Failure::Usage(format!(
            "quantifier `{}` requires --alpha",
            kind.token()
        ))),
        (false, Some(_)) => Err(Failure::Usage(format!(
            "quantifier `{}` takes no --alpha",
            kind.token()
        ))),
        _ => Quantifier::from_kind(kind, alpha).map_err(usage),
    }
}

/// Format used for probabilities and weights meant for people: six
/// decimals without trailing zeros.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn gen_data(a: GenDataArgs) -> CmdResult {
    let mut spec = match a.preset {
        Preset::Full => CorpusSpec::full(),
        Preset::Desk => CorpusSpec::default(),
    };
    if let Some(c) = a.classes {
        let mut classes: Vec<FaultClass> = Vec::new();
        for class in c {
            if !classes.contains(&class) {
                classes.push(class);
            }
        }
        spec.classes = classes;
    }
    if let Some(v) = a.combos {
        spec.combos = v;
    }
    if let Some(v) = a.runs_per_combo {
        spec.runs_per_combo = v;
    }
    if let Some(v) = a.nonfault_runs {
        spec.nonfault_runs = v;
    }
    if let Some(v) = a.variables {
        spec.plant.variables = v;
    }
    if let Some(v) = a.run_length {
        spec.plant.run_length = v;
    }
    if let Some(v) = a.severity_min {
        spec.severity.0 = v;
    }
    if let Some(v) = a.severity_max {
        spec.severity.1 = v;
    }
    if let Some(v) = a.noise {
        spec.plant.noise_sigma = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate().map_err(usage)?;
    let entries = generate_corpus(&spec, &a.out)?;

    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &entries {
        *per_class.entry(e.class.index()).or_default() += 1;
    }
    let faults = entries.iter().filter(|e| e.class != FaultClass::NonFault).count();
    println!(
        "wrote {} runs ({} fault, {} non-fault) of {} samples x {} variables to {}",
        entries.len(),
        faults,
        entries.len() - faults,
        spec.plant.run_length,
        spec.plant.variables,
        a.out.display()
    );
    println!("class,runs");
    for (idx, n) in per_class {
        println!(
            "{},{n}",
            FaultClass::from_index(idx).expect("class index from a manifest entry")
        );
    }
    println!("manifest: {}", a.out.join(MANIFEST_FILE).display());
    Ok(())
}

/// Loads the corpus and splits it into folds.
fn load_split(dir: &Path, folds: u64, seed: u64) -> Result<(Vec<MonitoringSeries>, CvPartition), Failure> {
    let corpus = load_corpus(dir)?;
    let registry: Vec<_> = corpus.iter().map(|(e, _)| e.record()).collect();
    let partition = cv_partition(&registry, folds as usize, seed)?;
    Ok((corpus.into_iter().map(|(_, s)| s).collect(), partition))
}

fn check_fold(fold: usize, partition: &CvPartition) -> CmdResult {
    if fold >= partition.k {
        return Err(Failure::Usage(format!(
            "--fold {fold} does not exist with {} folds",
            partition.k
        )));
    }
    Ok(())
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "accuracy {:.4}  macro precision {:.4}  macro recall {:.4}  macro F1 {:.4}",
        m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1
    )
}

fn print_confusion(m: &Metrics) {
    println!("confusion (rows = truth, columns = prediction):");
    for (i, row) in m.confusion.iter().enumerate() {
        let name = FaultClass::from_index(i).map_or_else(|| i.to_string(), |c| c.to_string());
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        println!("{name:>9} {}", cells.join(""));
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn train(a: TrainArgs) -> CmdResult {
    let quantifier = quantifier_from(a.quantifier, a.alpha)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        momentum: a.momentum,
        seed: a.seed,
        layout: a.layout,
        quantifier,
    };
    config.validate().map_err(usage)?;
    let DataArgs {
        corpus,
        window,
        step,
        folds,
        partition_seed,
    } = a.data;
    let (window, step) = (window as usize, step as usize);
    let (runs, partition) = load_split(&corpus, folds, partition_seed)?;
    check_fold(a.fold, &partition)?;
    let variables = runs.first().map_or(0, MonitoringSeries::n_vars);
    let layout = build_layout(a.layout, quantifier, variables, window, FaultClass::COUNT).map_err(usage)?;
    let fold = harness::prepare_fold(&runs, &partition, a.fold, window, step)?;

    eprintln!(
        "training {} on fold {} ({} training windows, {} test windows)",
        layout.describe(),
        a.fold,
        fold.train.len(),
        fold.test.len()
    );
    let started = Instant::now();
    let (net, history) = harness::train(&layout, &fold.train, &config)?;
    let metrics = harness::evaluate(&net, &fold.test)?;
    eprintln!("trained in {:.1} s", started.elapsed().as_secs_f64());

    create_dir(&a.out)?;
    checkpoint::save(&net, &a.out.join("model.ckpt"))?;
    fold.stats.save(&a.out.join("stats.json"))?;
    let record = json!({
        "config": config,
        "window": window,
        "step": step,
        "folds": partition.k,
        "partition_seed": partition_seed,
        "fold": a.fold,
        "test_runs": fold.test_runs,
        "loss": history,
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&record).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(&a.out.join("metrics.json"), &text)?;
    println!("fold {}: {}", a.fold, metrics_line(&metrics));
    println!("saved {}", a.out.display());
    Ok(())
}

fn grid(a: GridArgs) -> CmdResult {
    let DataArgs {
        corpus,
        window,
        step,
        folds,
        partition_seed,
    } = a.data;
    let spec = GridSpec {
        layouts: a.layouts,
        quantifiers: a.quantifiers,
        learning_rates: a.lrs,
        batch_sizes: a.batches,
        epochs: a.epochs,
        momentum: a.momentum,
        seed: a.seed,
        window: window as usize,
        step: step as usize,
        folds: a.fold,
        save_checkpoints: !a.no_checkpoints,
    };
    let (runs, partition) = load_split(&corpus, folds, partition_seed)?;
    for &f in &spec.folds {
        check_fold(f, &partition)?;
    }
    for layout in &spec.layouts {
        let variables = runs.first().map_or(0, MonitoringSeries::n_vars);
        build_layout(*layout, Quantifier::Most, variables, spec.window, FaultClass::COUNT).map_err(usage)?;
    }
    let result = run_grid(&spec, &runs, &partition, &a.out, a.jobs)?;
    let failed: Vec<_> = result
        .cells
        .iter()
        .filter_map(|c| match &c.status {
            CellStatus::Failed { error } => Some((c.id(), error.clone())),
            CellStatus::Ok { .. } => None,
        })
        .collect();
    println!(
        "{} cells, {} failed; results in {}",
        result.cells.len(),
        failed.len(),
        a.out.display()
    );
    if let Ok(best) = select_best(&result.summaries) {
        let s = &result.summaries[best];
        println!(
            "best: {} (macro F1 {:.4}, accuracy {:.4})",
            s.config.id(),
            s.macro_f1,
            s.accuracy
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        for (id, error) in &failed {
            eprintln!("failed cell {id}: {error}");
        }
        Err(Failure::Runtime(format!(
            "{} cells failed; see {}",
            failed.len(),
            a.out.join("cells.csv").display()
        )))
    }
}

fn stats_path(checkpoint: &Path, stats: Option<PathBuf>) -> PathBuf {
    stats.unwrap_or_else(|| checkpoint.with_file_name("stats.json"))
}

fn load_model(checkpoint: &Path, stats: Option<PathBuf>) -> Result<(Network, StandardizationStats), Failure> {
    if !checkpoint.is_file() {
        return Err(Failure::Runtime(format!(
            "checkpoint file not found: {}",
            checkpoint.display()
        )));
    }
    let net = checkpoint::load(checkpoint)?;
    let stats_path = stats_path(checkpoint, stats);
    if !stats_path.is_file() {
        return Err(Failure::Runtime(format!(
            "statistics file not found: {}",
            stats_path.display()
        )));
    }
    let stats = StandardizationStats::load(&stats_path)?;
    Ok((net, stats))
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let (net, stats) = load_model(&a.checkpoint, a.stats)?;
    let (runs, partition) = load_split(&a.corpus, a.folds, a.partition_seed)?;
    check_fold(a.fold, &partition)?;
    let test_ids = partition.test_runs(a.fold);
    stats.ensure_disjoint(test_ids.iter().map(String::as_str))?;
    let mut test: Vec<&MonitoringSeries> = runs.iter().filter(|r| test_ids.contains(&r.run_id)).collect();
    test.sort_by(|x, y| x.run_id.cmp(&y.run_id));

    let layout = net.layout();
    let mut windows = Vec::new();
    for r in test {
        windows.extend(slide_windows(
            &apply_stats(r, &stats)?,
            layout.window(),
            a.step as usize,
        )?);
    }
    let data = Dataset::from_windows(&windows, layout.variables(), layout.window())?;
    let metrics = harness::evaluate(&net, &data)?;
    println!("fold {} ({} windows): {}", a.fold, data.len(), metrics_line(&metrics));
    print_confusion(&metrics);
    if let Some(out) = a.out {
        let text = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(&out, &text)?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    let path = if a.results.is_dir() {
        a.results.join("summary.csv")
    } else {
        a.results.clone()
    };
    if !path.is_file() {
        return Err(Failure::Runtime(format!("results file not found: {}", path.display())));
    }
    let summaries = read_summaries(&path)?;
    let report = pooling_report(&summaries, a.layout, &a.baseline)?;
    let csv = report.to_csv();
    match a.out {
        Some(out) => {
            write_file(&out, &csv)?;
            eprintln!("wrote {}", out.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> CmdResult {
    let (net, stats) = load_model(&a.checkpoint, a.stats)?;
    let window = net.layout().window();
    let mut diag = StreamDiagnoser::new(&net, &stats, window, a.step as usize).map_err(usage)?;
    let (reader, source): (Box<dyn Read>, PathBuf) = match &a.input {
        Some(p) => (
            Box::new(BufReader::new(File::open(p).map_err(|e| io_failure(p, e))?)),
            p.clone(),
        ),
        None => (Box::new(io::stdin().lock()), PathBuf::from("<stdin>")),
    };
    let rows = read_stream_rows(reader, &stats.variables, &source)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut errors = 0usize;
    for row in rows {
        let outcome = match row {
            Ok((ts, values)) => diag.push(&ts, &values).map_err(|e| format!("at {ts}: {e}")),
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(Some(event)) => {
                let written = writeln!(out, "{}", event.to_csv_line()).and_then(|()| out.flush());
                match written {
                    Ok(()) => {}
                    // the consumer went away; nothing left to do
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
                    Err(e) => return Err(Failure::Runtime(e.to_string())),
                }
            }
            Ok(None) => {}
            Err(e) if a.strict => return Err(Failure::Runtime(e)),
            Err(e) => {
                errors += 1;
                eprintln!("error: {e}");
            }
        }
    }
    if errors > 0 {
        eprintln!("{errors} rows rejected");
    }
    Ok(())
}

fn quantifier(a: QuantifierArgs) -> CmdResult {
    let q = quantifier_from(a.name, a.alpha)?;
    if a.n.is_empty() || a.n.contains(&0) {
        return Err(Failure::Usage("--n values must be at least 1".into()));
    }
    let continuous = quantifier_orness(&q)?;
    println!("quantifier,n,orness_continuous,orness_discrete,weights");
    for &n in &a.n {
        let w = rim_weights(&q, n)?;
        let weights: Vec<String> = w.as_slice().iter().map(|&x| short(x)).collect();
        println!(
            "{},{n},{},{},{}",
            q.token(),
            short(continuous),
            short(discrete_orness(&w)),
            weights.join(",")
        );
    }
    Ok(())
}
