//! The incremental class-addition protocol.
//!
//! For every `k` in `k_min..=k_max` and every root seed, one experiment
//! selects the first `k` categories, samples, splits, trains and evaluates on
//! the held-out test items. Each experiment lands in its own directory under
//! `experiments/`, written to a temporary directory first and renamed into
//! place, so a directory that exists is complete. A re-run reuses every
//! experiment whose manifest carries the same config fingerprint.
//!
//! Seeds per experiment:
//! - sampling and splitting: `mix(root, SAMPLE)` in frozen-pool mode, so
//!   class `j` keeps the same samples and the same test items at every `k`;
//!   `mix(root, SAMPLE, k)` in resample mode.
//! - training: `mix(root, TRAIN, k, backend id)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{predict, train, Backend, TrainConfig};
use crate::corpus::{
    filter_min_length, sample_balanced, select_classes, split, CategoryTable, ProductRecord,
    SamplingConfig,
};
use crate::error::{Error, Result};
use crate::features::{featurize, VectorizerConfig};
use crate::metrics::{confusion, macro_report, per_class_csv, MacroReport};
use crate::util::{hash64, mix_seed, write_atomic};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_CSV_HEADER: &str =
    "k,backend,seed,precision,recall,f1,accuracy,n_steps,train_seconds";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const FAILURES_JSON: &str = "failures.json";
pub const EXPERIMENTS_DIR: &str = "experiments";
pub const PER_CLASS_CSV: &str = "per_class.csv";

const SAMPLE_TAG: u64 = 0x53414d50;
const TRAIN_TAG: u64 = 0x5452_4149;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    /// Class `j` draws the same samples at every `k`.
    #[default]
    Frozen,
    /// All classes are redrawn at every `k`.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub category_table: CategoryTable,
    /// `sampling.seed` is replaced by the per-experiment sampling seed.
    pub sampling: SamplingConfig,
    pub vectorizer: VectorizerConfig,
    /// `training.seed` is replaced by the per-experiment training seed.
    pub training: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pool_mode: PoolMode,
    /// Measured wall-clock seconds go into `train_seconds` only when set;
    /// otherwise the column holds 0 and output stays byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    /// Upper bound on concurrently running experiments (0 = rayon default).
    #[serde(default)]
    pub parallel: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max || self.k_max > self.category_table.len() {
            return Err(Error::arg(format!(
                "need 1 <= k_min <= k_max <= {} (category count), got k_min={} k_max={}",
                self.category_table.len(),
                self.k_min,
                self.k_max
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::arg("at least one seed is required"));
        }
        self.sampling.validate()?;
        self.vectorizer.validate()?;
        self.training.validate()
    }

    /// Hash of every field that influences results.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallel = 0;
        c.seeds.clear();
        c.k_min = 0;
        c.k_max = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:016x}", hash64(0, json.as_bytes()))
    }

    pub fn sampling_seed(&self, root: u64, k: usize) -> u64 {
        match self.pool_mode {
            PoolMode::Frozen => mix_seed(root, &[SAMPLE_TAG]),
            PoolMode::Resample => mix_seed(root, &[SAMPLE_TAG, k as u64]),
        }
    }

    pub fn training_seed(&self, root: u64, k: usize) -> u64 {
        mix_seed(root, &[TRAIN_TAG, k as u64, self.training.backend.id()])
    }
}

/// One point of a metric-vs-K curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub backend: Backend,
    pub seed: u64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n_steps: usize,
    pub train_seconds: f64,
}

impl SweepRow {
    /// A row carrying `[precision, recall, f1, accuracy]` and no training
    /// information.
    pub fn with_metrics(k: usize, backend: Backend, seed: u64, metrics: [f64; 4]) -> Self {
        SweepRow {
            k,
            backend,
            seed,
            macro_precision: metrics[0],
            macro_recall: metrics[1],
            macro_f1: metrics[2],
            accuracy: metrics[3],
            n_steps: 0,
            train_seconds: 0.0,
        }
    }

    /// Directory name of this row's experiment under `experiments/`.
    pub fn experiment_name(&self) -> String {
        experiment_name(self.backend, self.k, self.seed)
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.k,
            self.backend.as_str(),
            self.seed,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.accuracy,
            self.n_steps,
            self.train_seconds
        )
    }
}

pub fn experiment_name(backend: Backend, k: usize, seed: u64) -> String {
    format!("{}-k{k:02}-s{seed}", backend.as_str())
}

/// Per-experiment record, stored as `manifest.json` next to the
/// per-class CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub code_version: String,
    pub config_fingerprint: String,
    pub k: usize,
    pub seed: u64,
    pub backend: Backend,
    pub sampling_seed: u64,
    pub training_seed: u64,
    pub classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub per_class_test_counts: Vec<usize>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub row: SweepRow,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub row: SweepRow,
    pub report: MacroReport,
    pub manifest: ExperimentManifest,
}

/// Runs one experiment on an already length-filtered corpus without
/// touching the filesystem.
pub fn evaluate_experiment(
    k: usize,
    cfg: &SweepConfig,
    filtered: &[ProductRecord],
    seed: u64,
) -> Result<ExperimentResult> {
    let classes = select_classes(&cfg.category_table, k)?;
    let sampling = SamplingConfig {
        seed: cfg.sampling_seed(seed, k),
        ..cfg.sampling.clone()
    };
    let samples = sample_balanced(filtered, &classes, &sampling)?;
    let data = split(&samples, &sampling)?;
    if data.test.is_empty() {
        return Err(Error::arg(
            "test split is empty (split_fraction = 1); evaluation needs held-out items",
        ));
    }
    let training = TrainConfig {
        seed: cfg.training_seed(seed, k),
        ..cfg.training.clone()
    };
    let start = Instant::now();
    let model = train(&data, &cfg.vectorizer, &training)?;
    let elapsed = start.elapsed().as_secs_f64();
    let predicted = data
        .test
        .par_iter()
        .map(|l| predict(&model, &featurize(&l.record.description, &cfg.vectorizer)))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = data.test.iter().map(|l| l.class_index).collect();
    let report = macro_report(&confusion(&truth, &predicted, k)?)?;
    let meta = model.metadata.as_ref().expect("trained model has metadata");
    let row = SweepRow {
        k,
        backend: training.backend,
        seed,
        macro_precision: report.macro_precision,
        macro_recall: report.macro_recall,
        macro_f1: report.macro_f1,
        accuracy: report.accuracy,
        n_steps: meta.steps,
        train_seconds: if cfg.record_timing { elapsed } else { 0.0 },
    };
    let manifest = ExperimentManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_fingerprint: cfg.fingerprint(),
        k,
        seed,
        backend: training.backend,
        sampling_seed: sampling.seed,
        training_seed: training.seed,
        classes: classes.names().into_iter().map(str::to_owned).collect(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        per_class_test_counts: data.per_class_test_counts.clone(),
        initial_loss: meta.initial_loss,
        final_loss: meta.final_loss,
        row: row.clone(),
    };
    Ok(ExperimentResult {
        row,
        report,
        manifest,
    })
}

/// Filters, runs and persists one experiment under `cfg.output_dir`.
pub fn run_experiment(
    k: usize,
    cfg: &SweepConfig,
    records: &[ProductRecord],
    seed: u64,
) -> Result<ExperimentResult> {
    let filtered = filter_min_length(records, cfg.sampling.min_description_chars);
    let result = evaluate_experiment(k, cfg, &filtered, seed).map_err(|e| context(k, seed, e))?;
    persist_experiment(&cfg.output_dir, &result).map_err(|e| context(k, seed, e))?;
    Ok(result)
}

fn context(k: usize, seed: u64, e: Error) -> Error {
    match e {
        Error::Experiment { .. } => e,
        other => Error::Experiment {
            k,
            seed,
            source: Box::new(other),
        },
    }
}

/// Writes `manifest.json` and `per_class.csv` into a temp directory and
/// renames it to `experiments/<name>`.
pub fn persist_experiment(output_dir: &Path, result: &ExperimentResult) -> Result<PathBuf> {
    let root = output_dir.join(EXPERIMENTS_DIR);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let name = result.row.experiment_name();
    let target = root.join(&name);
    let tmp = crate::util::temp_sibling(&target);
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let write = || -> Result<()> {
        let names: Vec<&str> = result.manifest.classes.iter().map(String::as_str).collect();
        let csv = per_class_csv(&result.report, &names)?;
        fs::write(tmp.join(PER_CLASS_CSV), csv).map_err(|e| Error::io(&tmp, e))?;
        let mut json = serde_json::to_string_pretty(&result.manifest)?;
        json.push('\n');
        fs::write(tmp.join(MANIFEST_JSON), json).map_err(|e| Error::io(&tmp, e))?;
        if target.exists() {
            fs::remove_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        }
        fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))
    };
    write().inspect_err(|_| {
        let _ = fs::remove_dir_all(&tmp);
    })?;
    Ok(target)
}

pub fn read_experiment_manifest(dir: &Path) -> Result<ExperimentManifest> {
    let p = dir.join(MANIFEST_JSON);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub k: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Successful rows in canonical order (ascending k, then seed).
    pub rows: Vec<SweepRow>,
    pub failures: Vec<Failure>,
    /// Rows taken from a previous run rather than recomputed.
    pub reused: usize,
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    code_version: &'a str,
    config_fingerprint: String,
    config: &'a SweepConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    run_config: Option<&'a serde_json::Value>,
}

/// Runs every `(k, seed)` experiment not already present in
/// `cfg.output_dir`, then writes `sweep.csv`, `manifest.json` and (when any
/// experiment failed) `failures.json`.
pub fn run_sweep(cfg: &SweepConfig, records: &[ProductRecord]) -> Result<SweepOutcome> {
    run_sweep_recorded(cfg, records, None)
}

/// Like [`run_sweep`], additionally storing `run_config` (typically the
/// resolved command-line configuration) in the run manifest.
pub fn run_sweep_recorded(
    cfg: &SweepConfig,
    records: &[ProductRecord],
    run_config: Option<&serde_json::Value>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let manifest = SweepManifest {
        code_version: env!("CARGO_PKG_VERSION"),
        config_fingerprint: cfg.fingerprint(),
        config: cfg,
        run_config,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&cfg.output_dir.join(MANIFEST_JSON), json.as_bytes())?;

    let filtered = filter_min_length(records, cfg.sampling.min_description_chars);
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(usize, u64)> = (cfg.k_min..=cfg.k_max)
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let fingerprint = cfg.fingerprint();
    let run_job = |&(k, seed): &(usize, u64)| -> (usize, u64, Result<(SweepRow, bool)>) {
        let dir = cfg.output_dir.join(EXPERIMENTS_DIR).join(experiment_name(
            cfg.training.backend,
            k,
            seed,
        ));
        if let Ok(m) = read_experiment_manifest(&dir) {
            if m.config_fingerprint == fingerprint && dir.join(PER_CLASS_CSV).is_file() {
                return (k, seed, Ok((m.row, true)));
            }
        }
        let res = evaluate_experiment(k, cfg, &filtered, seed)
            .and_then(|r| persist_experiment(&cfg.output_dir, &r).map(|_| r.row))
            .map(|row| (row, false));
        (k, seed, res)
    };
    let results: Vec<_> = if cfg.parallel == 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel)
            .build()
            .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_job).collect())
    };
    let mut outcome = SweepOutcome::default();
    for (k, seed, res) in results {
        match res {
            Ok((row, reused)) => {
                outcome.reused += usize::from(reused);
                outcome.rows.push(row);
            }
            Err(e) => outcome.failures.push(Failure {
                k,
                seed,
                message: e.to_string(),
            }),
        }
    }
    write_atomic(
        &cfg.output_dir.join(SWEEP_CSV),
        sweep_csv(&outcome.rows).as_bytes(),
    )?;
    let failures_path = cfg.output_dir.join(FAILURES_JSON);
    if outcome.failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        let mut json = serde_json::to_string_pretty(&outcome.failures)?;
        json.push('\n');
        write_atomic(&failures_path, json.as_bytes())?;
    }
    Ok(outcome)
}

/// Renders rows in canonical order with the fixed header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted
        .sort_by(|a, b| (a.k, a.seed, a.backend.as_str()).cmp(&(b.k, b.seed, b.backend.as_str())));
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SWEEP_CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "unexpected sweep.csv header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("sweep.csv line {}: {line:?}", i + 2));
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(SweepRow {
            k: f[0].parse().map_err(|_| bad())?,
            backend: f[1].parse().map_err(|_| bad())?,
            seed: f[2].parse().map_err(|_| bad())?,
            macro_precision: num(f[3])?,
            macro_recall: num(f[4])?,
            macro_f1: num(f[5])?,
            accuracy: num(f[6])?,
            n_steps: f[7].parse().map_err(|_| bad())?,
            train_seconds: num(f[8])?,
        });
    }
    Ok(rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_csv(&text)
}
