//! Acceptance suite: every criterion runs in order inside one test so the
//! timed ones do not compete for the CPU, and each prints one PASS/FAIL
//! line on stderr (written directly, so it shows without `--nocapture`).

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use owapool::dataprep::{
    apply_stats, cv_partition, slide_windows, window_count, FaultClass, MonitoringSeries, RunRecord,
};
use owapool::harness::{
    self, delta_percent, diagnose_stream, format_delta, pooling_report, read_stream_rows, run_grid, Dataset, GridSpec,
    Metrics, StreamEvent, TrainConfig,
};
use owapool::layouts::{build_layout, LayoutName};
use owapool::nn::{owa_pool_forward, Tensor};
use owapool::quantifiers::{discrete_orness, quantifier_orness, rim_weights, OwaWeights, Quantifier};
use owapool::synthplant::{generate_corpus, load_corpus, plan_corpus, CorpusSpec, ManifestEntry};

type Check = Result<String, String>;

fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    let _ = err.flush();
}

struct Suite {
    failed: Vec<usize>,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, limit: Option<Duration>, check: impl FnOnce() -> Check) {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let budget = match limit {
            Some(l) => {
                if elapsed > l {
                    pass = false;
                    detail = format!("{detail}; over the time limit");
                }
                format!("{:.2} s of {} s", elapsed.as_secs_f64(), l.as_secs())
            }
            None => format!("{:.2} s", elapsed.as_secs_f64()),
        };
        if !pass {
            self.failed.push(id);
        }
        say(&format!(
            "ACCEPTANCE {id:>2} {} {name} [{budget}] {detail}",
            if pass { "PASS" } else { "FAIL" }
        ));
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn weights_exact() -> Check {
    let third = 1.0 / 3.0;
    let cases: Vec<(Quantifier, Vec<f64>, Vec<f64>)> = vec![
        (Quantifier::ThereExists, vec![1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]),
        (Quantifier::Average, vec![0.5, 0.5], vec![0.25; 4]),
        (Quantifier::Most, vec![0.4, 0.6], vec![0.0, 0.4, 0.5, 0.1]),
        (Quantifier::AtLeastHalf, vec![1.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]),
        (
            Quantifier::AtMiddle { alpha: 0.2 },
            vec![0.6, 0.4],
            vec![0.1, 0.5, 0.4, 0.0],
        ),
        (
            Quantifier::AtLeast { alpha: 0.75 },
            vec![2.0 * third, third],
            vec![third, third, third, 0.0],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (q, two, four) in &cases {
        for want in [two, four] {
            let got = rim_weights(q, want.len()).map_err(|e| e.to_string())?;
            for (g, w) in got.as_slice().iter().zip(want.iter()) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("largest deviation {worst:e}"))?;
    for q in Quantifier::standard_set() {
        for n in 1..=64 {
            let s: f64 = rim_weights(&q, n).map_err(|e| e.to_string())?.as_slice().iter().sum();
            ensure((s - 1.0).abs() <= 1e-12, || format!("{q} n={n} sums to {s}"))?;
        }
    }
    Ok(format!(
        "6 quantifiers at n=2,4 within {worst:.1e}; sums exact to 1e-12 for n=1..64"
    ))
}

fn special_cases() -> Check {
    let mut rng = rng(2);
    let mut max_dev: f64 = 0.0;
    for window in [(2usize, 2usize), (2, 1)] {
        let n = window.0 * window.1;
        let patches = 1000;
        // integers from a small range give ties as well as distinct values
        let data: Vec<f64> = (0..patches * n)
            .map(|i| {
                if i % 3 == 0 {
                    rng.random_range(-3..3) as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        let input = Tensor::new(vec![patches, 1, window.0, window.1], data.clone()).map_err(|e| e.to_string())?;
        let (max_out, _) = owa_pool_forward(&input, window, &Quantifier::ThereExists).map_err(|e| e.to_string())?;
        let (avg_out, _) = owa_pool_forward(&input, window, &Quantifier::Average).map_err(|e| e.to_string())?;
        for (p, patch) in data.chunks_exact(n).enumerate() {
            let m = reference_max(patch);
            ensure(max_out.data()[p].to_bits() == m.to_bits(), || {
                format!("max pooling differs on patch {patch:?}: {} vs {m}", max_out.data()[p])
            })?;
            max_dev = max_dev.max((avg_out.data()[p] - reference_mean(patch)).abs());
        }
    }
    ensure(max_dev <= 1e-12, || format!("mean pooling deviates by {max_dev:e}"))?;
    Ok(format!("2000 patches: max bit-identical, mean within {max_dev:.1e}"))
}

fn orness() -> Check {
    for n in 2..=16 {
        let mut first = vec![0.0; n];
        first[0] = 1.0;
        let o = discrete_orness(&OwaWeights::new(first).map_err(|e| e.to_string())?);
        ensure(o == 1.0, || format!("[1,0,..] of length {n} gives {o}"))?;
        let uniform = rim_weights(&Quantifier::Average, n).map_err(|e| e.to_string())?;
        let o = discrete_orness(&uniform);
        ensure(o == 0.5, || format!("uniform weights of length {n} give {o:e}"))?;
    }
    let most = quantifier_orness(&Quantifier::Most).map_err(|e| e.to_string())?;
    let half = quantifier_orness(&Quantifier::AtLeastHalf).map_err(|e| e.to_string())?;
    ensure((most - 0.45).abs() <= 1e-6, || format!("Most orness {most}"))?;
    ensure((half - 0.75).abs() <= 1e-6, || format!("AtLeastHalf orness {half}"))?;
    Ok(format!(
        "max 1.0 and uniform 0.5 exact for n=2..16; Most {most:.9}, AtLeastHalf {half:.9}"
    ))
}

fn gradients() -> Check {
    let mut parts = Vec::new();
    let mut push = |name: String, err: f64| -> Result<(), String> {
        ensure(err <= GRAD_TOLERANCE, || format!("{name} relative error {err:e}"))?;
        parts.push(format!("{name} {err:.1e}"));
        Ok(())
    };
    push("conv".into(), worst(GRAD_TRIALS, 11, conv_trial))?;
    for (i, q) in Quantifier::standard_set().iter().enumerate() {
        push(
            format!("pool[{}]", q.token()),
            worst(GRAD_TRIALS, 20 + i as u64, |r| pool_trial(r, q)),
        )?;
    }
    push("dense".into(), worst(GRAD_TRIALS, 12, dense_trial))?;
    push("relu".into(), worst(GRAD_TRIALS, 13, relu_trial))?;
    push("softmax-xent".into(), worst(GRAD_TRIALS, 14, softmax_xent_trial))?;
    Ok(format!("100 trials each, worst: {}", parts.join(", ")))
}

fn window_laws() -> Check {
    let mut rng = rng(5);
    for i in 0..10_000 {
        let len = rng.random_range(1..120);
        let size = rng.random_range(1..=len.min(16));
        let step = rng.random_range(1..10);
        let onset = if rng.random_bool(0.8) {
            Some(rng.random_range(0..len))
        } else {
            None
        };
        let windows = slide_windows(&ramp_series(len, onset), size, step).map_err(|e| e.to_string())?;
        let expected = brute_windows(len, size, step, onset);
        let formula = (len - size) / step + 1;
        ensure(
            windows.len() == formula && window_count(len, size, step) == formula,
            || {
                format!(
                    "tuple {i}: T={len} S={size} P={step} gives {} windows, expected {formula}",
                    windows.len()
                )
            },
        )?;
        ensure(windows.len() == expected.len(), || {
            format!("tuple {i}: enumeration disagrees")
        })?;
        for (w, (start, faulty)) in windows.iter().zip(&expected) {
            ensure(
                w.start == *start && (w.label != FaultClass::NonFault) == *faulty,
                || {
                    format!(
                        "tuple {i}: T={len} S={size} P={step} onset={onset:?} window at {} mislabelled",
                        w.start
                    )
                },
            )?;
        }
    }
    Ok("10000 random (T, S, P, onset) tuples match enumeration".into())
}

fn partition_laws() -> Check {
    let plan = plan_corpus(&CorpusSpec::full()).map_err(|e| e.to_string())?;
    let registry: Vec<RunRecord> = plan.iter().map(|(e, _)| e.record()).collect();
    let p = cv_partition(&registry, 5, 0).map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    for fold in &p.folds {
        for id in fold {
            ensure(seen.insert(id.as_str()), || format!("run {id} appears twice"))?;
        }
    }
    ensure(seen.len() == registry.len(), || {
        format!("{} of {} runs covered", seen.len(), registry.len())
    })?;
    let mut groups: BTreeMap<(usize, usize), Vec<&str>> = BTreeMap::new();
    for r in registry.iter().filter(|r| r.class != FaultClass::NonFault) {
        groups.entry((r.class.index(), r.combo)).or_default().push(&r.run_id);
    }
    for ((class, combo), ids) in &groups {
        for (f, fold) in p.folds.iter().enumerate() {
            let here = ids.iter().filter(|id| fold.iter().any(|x| x == *id)).count();
            ensure(here == 2, || {
                format!("class {class} combo {combo} has {here} runs in fold {f}")
            })?;
        }
    }
    Ok(format!(
        "{} runs in 5 disjoint covering folds; 2 runs of each of {} combinations per fold",
        registry.len(),
        groups.len()
    ))
}

fn metrics_oracle() -> Check {
    let mut rng = rng(7);
    for i in 0..1000 {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(0..400);
        let truth = random_labels(&mut rng, n, k);
        let predicted = random_labels(&mut rng, n, k);
        let m = Metrics::from_predictions(&truth, &predicted, k).map_err(|e| e.to_string())?;
        ensure(metrics_agree(&m, &recount(&truth, &predicted, k)), || {
            format!("instance {i} disagrees")
        })?;
    }
    Ok("1000 random instances: counts exact, ratios within 1e-12".into())
}

fn load(dir: &Path) -> Result<(Vec<ManifestEntry>, Vec<MonitoringSeries>), String> {
    let corpus = load_corpus(dir).map_err(|e| e.to_string())?;
    Ok(corpus.into_iter().unzip())
}

fn end_to_end(dir: &Path) -> Check {
    let (entries, runs) = load(dir)?;
    let registry: Vec<RunRecord> = entries.iter().map(ManifestEntry::record).collect();
    let partition = cv_partition(&registry, 5, 0).map_err(|e| e.to_string())?;
    let defaults = TrainConfig::default();
    let spec = GridSpec {
        layouts: vec![LayoutName::Model7],
        quantifiers: vec![Quantifier::Most],
        learning_rates: vec![defaults.learning_rate],
        batch_sizes: vec![defaults.batch_size],
        epochs: vec![defaults.epochs],
        momentum: defaults.momentum,
        seed: 0,
        window: 4,
        step: 1,
        folds: Vec::new(),
        save_checkpoints: false,
    };
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run_grid(&spec, &runs, &partition, out.path(), jobs).map_err(|e| e.to_string())?;
    let summary = &result.summaries[0];
    let folds: Vec<String> = result
        .cells
        .iter()
        .map(|c| {
            c.metrics()
                .map_or_else(|| "failed".into(), |m| format!("{:.3}", m.macro_f1))
        })
        .collect();
    let detail = format!(
        "{} runs, model7 Most lr=0.001 batch=64 200 epochs: mean macro F1 {:.4} (folds {}), accuracy {:.4}",
        runs.len(),
        summary.macro_f1,
        folds.join(" "),
        summary.accuracy
    );
    ensure(summary.complete(), || format!("{detail}; some folds failed"))?;
    ensure(summary.macro_f1 >= 0.90, || format!("{detail}; below 0.90"))?;
    Ok(detail)
}

fn pooling_probe(spec: &CorpusSpec) -> Check {
    // hand-recomputed deltas first
    let baseline = [0.91, 0.84, 0.84, 0.83];
    let rows = [
        ([0.91, 0.91, 0.85, 0.85], ["0.00", "8.33", "1.19", "2.41"]),
        ([0.93, 0.91, 0.88, 0.89], ["2.20", "8.33", "4.76", "7.23"]),
        ([0.94, 0.94, 0.91, 0.92], ["3.30", "11.90", "8.33", "10.84"]),
        ([0.92, 0.90, 0.86, 0.86], ["1.10", "7.14", "2.38", "3.61"]),
        ([0.93, 0.90, 0.87, 0.88], ["2.20", "7.14", "3.57", "6.02"]),
    ];
    for (values, expected) in rows {
        for k in 0..4 {
            let d = delta_percent(baseline[k], values[k]).ok_or("zero baseline")?;
            ensure(format_delta(d) == expected[k], || {
                format!(
                    "{} -> {} gives {} not {}",
                    baseline[k],
                    values[k],
                    format_delta(d),
                    expected[k]
                )
            })?;
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(spec, dir.path()).map_err(|e| e.to_string())?;
    let (entries, runs) = load(dir.path())?;
    let registry: Vec<RunRecord> = entries.iter().map(ManifestEntry::record).collect();
    let partition = cv_partition(&registry, 5, 0).map_err(|e| e.to_string())?;
    let grid = GridSpec {
        layouts: vec![LayoutName::Lenet5],
        learning_rates: vec![0.01],
        batch_sizes: vec![64],
        folds: vec![0],
        save_checkpoints: false,
        ..GridSpec::default()
    };
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let result = run_grid(&grid, &runs, &partition, out.path(), 1).map_err(|e| e.to_string())?;
    let report = pooling_report(&result.summaries, Some(LayoutName::Lenet5), &Quantifier::ThereExists)
        .map_err(|e| e.to_string())?;
    ensure(report.rows.len() == 6, || format!("{} rows", report.rows.len()))?;
    ensure(report.rows[0].baseline, || "baseline row is not first".into())?;
    let base = report.rows[0].values;
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    for (row, line) in report.rows.iter().zip(&lines[1..]).skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        for k in 0..4 {
            let recomputed = 100.0 * (row.values[k] - base[k]) / base[k];
            let stored = row.deltas[k].ok_or("missing delta")?;
            ensure((stored - recomputed).abs() <= 1e-9, || {
                format!("{} delta {k} is {stored}", row.label)
            })?;
            ensure(fields[3 + 3 * k] == format_delta(recomputed), || {
                format!("{} prints {} for {recomputed}", row.label, fields[3 + 3 * k])
            })?;
            ensure([200, 500, 700].contains(&row.epochs[k]), || {
                format!("{} epochs {}", row.label, row.epochs[k])
            })?;
        }
    }
    for line in &lines {
        say(&format!("    {line}"));
    }
    Ok("hand deltas reproduced; lenet5 six-quantifier report at 200/500/700 epochs consistent".into())
}

fn online_offline(dir: &Path) -> Check {
    let (entries, runs) = load(dir)?;
    let registry: Vec<RunRecord> = entries.iter().map(ManifestEntry::record).collect();
    let partition = cv_partition(&registry, 5, 0).map_err(|e| e.to_string())?;
    let fold = harness::prepare_fold(&runs, &partition, 0, 4, 1).map_err(|e| e.to_string())?;
    let layout = build_layout(
        LayoutName::Model7,
        Quantifier::Most,
        fold.train.variables(),
        4,
        FaultClass::COUNT,
    )
    .map_err(|e| e.to_string())?;
    // a short, fast-learning run so the stream sees more than one class
    let config = TrainConfig {
        epochs: 8,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let (model, _) = harness::train(&layout, &fold.train, &config).map_err(|e| e.to_string())?;

    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.shuffle(&mut rng(10));
    let mut windows_checked = 0;
    let mut classes_seen = HashSet::new();
    for &i in order.iter().take(20) {
        let run = &runs[i];
        let offline_windows = slide_windows(&apply_stats(run, &fold.stats).map_err(|e| e.to_string())?, 4, 1)
            .map_err(|e| e.to_string())?;
        let data = Dataset::from_windows(&offline_windows, run.n_vars(), 4).map_err(|e| e.to_string())?;
        let offline = harness::predict_proba(&model, &data).map_err(|e| e.to_string())?;

        let path = dir.join(&entries[i].path);
        let file = File::open(&path).map_err(|e| e.to_string())?;
        let rows = read_stream_rows(file, &fold.stats.variables, &path).map_err(|e| e.to_string())?;
        let events = diagnose_stream(&model, &fold.stats, rows, 4, 1).map_err(|e| e.to_string())?;
        ensure(events.len() == offline.len(), || {
            format!(
                "{}: {} stream events, {} windows",
                run.run_id,
                events.len(),
                offline.len()
            )
        })?;
        for ((event, probs), w) in events.iter().zip(&offline).zip(&offline_windows) {
            let StreamEvent::Diagnosis(d) = event else {
                return Err(format!("{}: stream reported {event:?}", run.run_id));
            };
            ensure(d.timestamp == w.end_timestamp, || {
                format!("{}: timestamp {}", run.run_id, d.timestamp)
            })?;
            ensure(d.class == harness::argmax(probs), || {
                format!("{}: class differs at {}", run.run_id, d.timestamp)
            })?;
            ensure(d.probabilities == *probs, || {
                format!("{}: probabilities differ at {}", run.run_id, d.timestamp)
            })?;
            classes_seen.insert(d.class);
            windows_checked += 1;
        }
    }
    Ok(format!(
        "20 runs, {windows_checked} windows: classes and probabilities identical ({} distinct classes predicted)",
        classes_seen.len()
    ))
}

#[test]
fn acceptance_criteria() {
    let mut suite = Suite { failed: Vec::new() };
    suite.run(1, "quantifier exactness", secs(1), weights_exact);
    suite.run(2, "special-case equivalence", secs(5), special_cases);
    suite.run(3, "orness", secs(1), orness);
    suite.run(4, "gradient checks", secs(60), gradients);
    suite.run(5, "window laws", secs(10), window_laws);
    suite.run(6, "partition laws", secs(1), partition_laws);
    suite.run(7, "metrics oracle", secs(5), metrics_oracle);

    let corpus = tempfile::tempdir().unwrap();
    let generated = generate_corpus(&CorpusSpec::default(), corpus.path());
    match generated {
        Ok(_) => {
            suite.run(8, "end-to-end desk scale", secs(15 * 60), || end_to_end(corpus.path()));
        }
        Err(e) => suite.run(8, "end-to-end desk scale", None, || {
            Err(format!("corpus generation failed: {e}"))
        }),
    }
    let probe_corpus = CorpusSpec {
        plant: owapool::synthplant::PlantConfig {
            run_length: 12,
            ..CorpusSpec::default().plant
        },
        combos: 1,
        ..CorpusSpec::default()
    };
    suite.run(9, "pooling comparison probe", None, || pooling_probe(&probe_corpus));
    suite.run(10, "online/offline consistency", secs(30), || {
        online_offline(corpus.path())
    });

    assert!(suite.failed.is_empty(), "failing criteria: {:?}", suite.failed);
}
