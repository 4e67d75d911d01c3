//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use classcurve::analysis::{fit_line, Metric};
use classcurve::classifier::{
    gradient_check, train, Backend, DropoutDraw, SoftmaxModel, TrainConfig,
};
use classcurve::cli::{self, ANALYSIS_JSON, EXIT_OK, METRICS_SVG};
use classcurve::corpus::{
    filter_min_length, sample_balanced, select_classes, split, CategoryTable, SamplingConfig,
};
use classcurve::features::{FeatureVector, VectorizerConfig};
use classcurve::metrics::{confusion, macro_report, ConfusionMatrix};
use classcurve::sweep::{
    read_experiment_manifest, read_sweep_csv, SweepRow, EXPERIMENTS_DIR, SWEEP_CSV,
};
use classcurve::synth::{generate, SynthConfig};
use classcurve::util::rng_from;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Per-class counts taken straight from the label lists.
fn oracle(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64, f64, f64) {
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for j in 1..=k {
        let tp = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &y)| t == j && y == j)
            .count() as f64;
        let fp = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &y)| t != j && y == j)
            .count() as f64;
        let fn_ = truth
            .iter()
            .zip(pred)
            .filter(|&(&t, &y)| t == j && y != j)
            .count() as f64;
        p += if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        r += if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f += if 2.0 * tp + fp + fn_ > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fn_)
        } else {
            0.0
        };
    }
    let correct = truth.iter().zip(pred).filter(|(t, y)| t == y).count() as f64;
    let kf = k as f64;
    (p / kf, r / kf, f / kf, correct / truth.len() as f64)
}

fn metric_oracle() -> Outcome {
    let mut rng = rng_from(2024);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let k = rng.gen_range(1..=20);
        let n = rng.gen_range(1..=2000);
        let skill: f64 = rng.gen();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=k)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.gen::<f64>() < skill {
                    t
                } else {
                    rng.gen_range(1..=k)
                }
            })
            .collect();
        let rep = macro_report(&confusion(&truth, &pred, k).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let (p, r, f, a) = oracle(&truth, &pred, k);
        for (got, want) in [
            (rep.macro_precision, p),
            (rep.macro_recall, r),
            (rep.macro_f1, f),
            (rep.accuracy, a),
        ] {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure(d < 1e-12, || format!("case {case}: {got} vs {want}"))?;
        }
    }
    Ok(format!("1000 random lists, max deviation {worst:.1e}"))
}

fn balanced_identity(rows: &[SweepRow]) -> Outcome {
    for r in rows {
        let d = (r.macro_recall - r.accuracy).abs();
        ensure(d < 1e-12, || {
            format!("K={} seed={}: |recall - accuracy| = {d:e}", r.k, r.seed)
        })?;
    }
    let mut rng = rng_from(77);
    for case in 0..100 {
        let k = rng.gen_range(1..=20);
        let m = rng.gen_range(1..=60u64);
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|_| {
                let mut row = vec![0u64; k];
                for _ in 0..m {
                    row[rng.gen_range(0..k)] += 1;
                }
                row
            })
            .collect();
        let cm = ConfusionMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let rep = macro_report(&cm).map_err(|e| e.to_string())?;
        let d = (rep.macro_recall - rep.accuracy).abs();
        ensure(d < 1e-12, || format!("matrix {case}: difference {d:e}"))?;
    }
    Ok(format!(
        "{} sweep rows and 100 random balanced matrices",
        rows.len()
    ))
}

fn single_class(rows: &[SweepRow]) -> Outcome {
    let k1: Vec<&SweepRow> = rows.iter().filter(|r| r.k == 1).collect();
    ensure(!k1.is_empty(), || "no K=1 rows".into())?;
    for r in &k1 {
        let all = [r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy];
        ensure(all == [1.0; 4], || format!("seed {}: {all:?}", r.seed))?;
    }
    Ok(format!("{} K=1 rows, all metrics exactly 1.0", k1.len()))
}

fn step_schedule() -> Outcome {
    let records = generate(&SynthConfig {
        samples_per_class: 5000,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let sampling = SamplingConfig::reference();
    let kept = filter_min_length(&records, sampling.min_description_chars);
    let table = CategoryTable::default_table();
    let vec_cfg = VectorizerConfig {
        dimension: 1 << 10,
        ngram_orders: vec![1],
        ..VectorizerConfig::default()
    };
    let mut seen = Vec::new();
    for (k, want) in [(20, 8437), (1, 421)] {
        let classes = select_classes(&table, k).map_err(|e| e.to_string())?;
        let pool = sample_balanced(&kept, &classes, &sampling).map_err(|e| e.to_string())?;
        let data = split(&pool, &sampling).map_err(|e| e.to_string())?;
        let model = train(&data, &vec_cfg, &TrainConfig::reference()).map_err(|e| e.to_string())?;
        let steps = model.metadata.as_ref().map(|m| m.steps).unwrap_or(0);
        ensure(steps == want, || {
            format!("K={k}: executed {steps}, expected {want}")
        })?;
        seen.push(format!("K={k}: {steps}"));
    }
    Ok(seen.join(", "))
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    for backend in [Backend::Linear, Backend::Mlp] {
        for case in 0..50u64 {
            let mut rng = rng_from(1000 + case);
            let d = rng.gen_range(2..=32);
            let k = rng.gen_range(1..=5);
            let h = rng.gen_range(1..=8);
            let mut model =
                SoftmaxModel::init(backend, k, d, h, true, case).map_err(|e| e.to_string())?;
            for w in model.input_weights.iter_mut().chain(model.dense.iter_mut()) {
                *w = rng.gen_range(-1.0..1.0);
            }
            let items: Vec<(FeatureVector, usize)> = (0..rng.gen_range(1..=6))
                .map(|_| {
                    let pairs: Vec<(u32, f64)> = (0..rng.gen_range(1..=d.min(8)))
                        .map(|_| (rng.gen_range(0..d as u32), rng.gen_range(-1.0..1.0)))
                        .collect();
                    (FeatureVector::from_pairs(d, pairs), rng.gen_range(1..=k))
                })
                .collect();
            let batch: Vec<(&FeatureVector, usize)> = items.iter().map(|(q, y)| (q, *y)).collect();
            let dropout = (backend == Backend::Mlp).then_some(DropoutDraw {
                rate: 0.25,
                seed: case,
            });
            let check = gradient_check(&model, &batch, dropout, 1e-4, 1e-6);
            worst = worst.max(check.max_relative_error);
            ensure(check.max_relative_error < 1e-4, || {
                format!("{backend:?} case {case}: {check:?}")
            })?;
        }
    }
    Ok(format!("100 instances, max relative error {worst:.1e}"))
}

fn collinear_fit() -> Outcome {
    let pts: Vec<(f64, f64)> = (1..=20)
        .map(|k| (k as f64, 1.0 - 0.01 * (k - 1) as f64))
        .collect();
    ensure((pts[19].1 - 0.81).abs() < 1e-15, || "bad fixture".into())?;
    let fit = fit_line(&pts).map_err(|e| e.to_string())?;
    ensure((fit.slope + 0.01).abs() < 1e-12, || {
        format!("slope {}", fit.slope)
    })?;
    ensure((fit.r_squared - 1.0).abs() < 1e-12, || {
        format!("R² {}", fit.r_squared)
    })?;
    Ok(format!(
        "slope {:.15}, R² {:.15}, {:.6} %/class",
        fit.slope,
        fit.r_squared,
        fit.rate_percent_per_class()
    ))
}

struct Run {
    dir: PathBuf,
    rows: Vec<SweepRow>,
    seconds: f64,
}

/// `classcurve all` on the bundled synthetic corpus: 20 classes x 500,
/// linear backend, three seeds.
fn desk_run(dir: &Path) -> Result<Run, String> {
    let config = dir.join("config.json");
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    std::fs::write(
        &config,
        r#"{"k_min": 1, "k_max": 20, "seeds": [1, 2, 3], "backend": "linear",
            "n_samples_per_class": 500, "synth": {"n_classes": 20, "samples_per_class": 500, "overlap": 0.3},
            "verbosity": 0}"#,
    )
    .map_err(|e| e.to_string())?;
    let out = dir.join("results");
    let start = Instant::now();
    let mut log = Vec::new();
    let code = cli::run(
        [
            "classcurve".as_ref(),
            "all".as_ref(),
            "--config".as_ref(),
            config.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ],
        None,
        &mut log,
    );
    let seconds = start.elapsed().as_secs_f64();
    ensure(code == EXIT_OK, || {
        format!("exit {code}: {}", String::from_utf8_lossy(&log))
    })?;
    let rows = read_sweep_csv(&out.join(SWEEP_CSV)).map_err(|e| e.to_string())?;
    Ok(Run {
        dir: out,
        rows,
        seconds,
    })
}

fn desk_trend(run: &Run) -> Outcome {
    let report: classcurve::analysis::DegradationReport = serde_json::from_str(
        &std::fs::read_to_string(run.dir.join(ANALYSIS_JSON)).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let acc = report.fit(Metric::Accuracy);
    ensure(run.rows.len() == 60, || {
        format!("{} rows, expected 60", run.rows.len())
    })?;
    ensure(acc.slope < 0.0, || format!("slope {}", acc.slope))?;
    ensure(acc.r_squared >= 0.8, || {
        format!("R² {:.4} < 0.8", acc.r_squared)
    })?;
    ensure(
        run.rows
            .iter()
            .filter(|r| r.k == 1)
            .all(|r| r.accuracy == 1.0),
        || "K=1 accuracy is not 1.0".into(),
    )?;
    ensure(run.seconds < 600.0, || format!("took {:.0} s", run.seconds))?;
    Ok(format!(
        "slope {:.5} ({:.3} %/class), R² {:.4}, {:.1} s",
        acc.slope, acc.rate_percent_per_class, acc.r_squared, run.seconds
    ))
}

fn artifacts(dir: &Path) -> Result<Vec<String>, String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n == SWEEP_CSV || n == ANALYSIS_JSON || n.ends_with(".svg"))
        .collect();
    names.sort();
    Ok(names)
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let names = artifacts(&a.dir)?;
    ensure(names == artifacts(&b.dir)?, || {
        "different artifact sets".into()
    })?;
    ensure(names.contains(&METRICS_SVG.to_string()), || {
        "no metric figure".into()
    })?;
    for n in &names {
        let x = std::fs::read(a.dir.join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.dir.join(n)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{n} differs between runs"))?;
    }
    Ok(format!(
        "{} files byte-identical: {}",
        names.len(),
        names.join(", ")
    ))
}

fn prefix_protocol(run: &Run) -> Outcome {
    let table = CategoryTable::default_table();
    let names = table.names();
    let mut checked = 0;
    for r in &run.rows {
        let dir = run.dir.join(EXPERIMENTS_DIR).join(r.experiment_name());
        let m = read_experiment_manifest(&dir).map_err(|e| e.to_string())?;
        ensure(m.k == r.k && m.classes == names[..r.k], || {
            format!("{}: classes {:?}", r.experiment_name(), m.classes)
        })?;
        checked += 1;
    }
    ensure(checked == run.rows.len() && checked > 0, || {
        "no manifests".into()
    })?;
    Ok(format!("{checked} experiment manifests match the K-prefix"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("criterion {id} [{tag}] {name}: {detail} ({secs:.1} s)");
        results.push((id, name, out, secs));
    };

    let runs = (
        desk_run(&tmp.path().join("a")),
        desk_run(&tmp.path().join("b")),
    );
    let run_err = |r: &Result<Run, String>| match r {
        Ok(_) => String::new(),
        Err(e) => format!("sweep failed: {e}"),
    };

    record(1, "metric oracle", &mut metric_oracle);
    record(2, "balanced identity", &mut || match &runs.0 {
        Ok(a) => balanced_identity(&a.rows),
        Err(_) => Err(run_err(&runs.0)),
    });
    record(3, "single class", &mut || match &runs.0 {
        Ok(a) => single_class(&a.rows),
        Err(_) => Err(run_err(&runs.0)),
    });
    record(4, "step schedule", &mut step_schedule);
    record(5, "gradient check", &mut gradients);
    record(6, "collinear fit", &mut collinear_fit);
    record(7, "desk-scale trend", &mut || match &runs.0 {
        Ok(a) => desk_trend(a),
        Err(_) => Err(run_err(&runs.0)),
    });
    record(8, "determinism", &mut || match (&runs.0, &runs.1) {
        (Ok(a), Ok(b)) => determinism(a, b),
        _ => Err(format!("{} {}", run_err(&runs.0), run_err(&runs.1))),
    });
    record(9, "prefix protocol", &mut || match &runs.0 {
        Ok(a) => prefix_protocol(a),
        Err(_) => Err(run_err(&runs.0)),
    });

    let failed: Vec<u32> = results
        .iter()
        .filter(|r| r.2.is_err())
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
