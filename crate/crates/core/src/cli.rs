//! Command-line front end: `synth`, `convert`, `sweep`, `analyze`, `report`
//! and `all`.
//!
//! Every `cmd_*` returns a process exit code: 0 on success, 1 when some
//! experiments (or output steps) failed, 2 on usage or configuration errors.
//! Messages go to a single writer supplied by the caller.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{degradation_report, DegradationReport};
use crate::classifier::Backend;
use crate::config::{Overrides, RunConfig, PARALLEL_ENV};
use crate::corpus::{load_jsonl, to_jsonl, ProductRecord, Reject};
use crate::error::{Error, Result};
use crate::metrics::{parse_per_class_csv, MacroReport};
use crate::report::{plot_metrics_vs_k, plot_per_class, summarize};
use crate::sweep::{
    read_experiment_manifest, read_sweep_csv, run_sweep_recorded, EXPERIMENTS_DIR, MANIFEST_JSON,
    PER_CLASS_CSV, SWEEP_CSV,
};
use crate::synth::generate;
use crate::util::write_atomic;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const ANALYSIS_JSON: &str = "analysis.json";
pub const METRICS_SVG: &str = "metrics_vs_k.svg";
pub const SUMMARY_MD: &str = "summary.md";
pub const REJECTS_JSONL: &str = "rejects.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "classcurve",
    version,
    about = "How classifier quality falls as classes are added"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; repeat for several seeds. `synth` uses the first one.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// linear or mlp.
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Concurrent experiments (0 = one per core).
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Results directory (`synth`: corpus file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the bundled synthetic corpus as JSON-lines.
    Synth(CommonArgs),
    /// Turn a raw per-category file into canonical JSON-lines.
    Convert {
        raw: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (K, seed) experiment.
    Sweep(CommonArgs),
    /// Fit metric-vs-K lines and write analysis.json.
    Analyze(CommonArgs),
    /// Render SVG charts and a markdown summary.
    Report(CommonArgs),
    /// synth (when the corpus is missing), sweep, analyze, report.
    All(CommonArgs),
}

macro_rules! say {
    ($log:expr, $($arg:tt)*) => {{
        let _ = writeln!($log, $($arg)*);
    }};
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I, env_parallel: Option<&str>, log: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            say!(log, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Command::Convert { raw, category, out } = &cli.command {
        return cmd_convert(raw, out, category, log);
    }
    let (Command::Synth(common)
    | Command::Sweep(common)
    | Command::Analyze(common)
    | Command::Report(common)
    | Command::All(common)) = &cli.command
    else {
        unreachable!("convert handled above")
    };
    let overrides = Overrides {
        seeds: common.seeds.clone(),
        k_min: common.k_min,
        k_max: common.k_max,
        backend: common.backend,
        parallel: common.parallel,
        output_dir: match cli.command {
            Command::Synth(_) => None,
            _ => common.out.clone(),
        },
    };
    let mut cfg = match RunConfig::resolve(common.config.as_deref(), env_parallel, &overrides) {
        Ok(c) => c,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match &cli.command {
        Command::Synth(_) => {
            if let Some(&s) = common.seeds.first() {
                cfg.synth.seed = s;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.corpus_path());
            cmd_synth(&cfg, &out, log)
        }
        Command::Sweep(_) => cmd_sweep(&cfg, log),
        Command::Analyze(_) => cmd_analyze(&cfg.output_dir, cfg.include_k1, log),
        Command::Report(_) => cmd_report(&cfg.output_dir, log),
        Command::All(_) => cmd_all(&cfg, log),
        Command::Convert { .. } => unreachable!(),
    }
}

/// Reads `CLASSCURVE_PARALLEL` from the process environment.
pub fn env_parallel() -> Option<String> {
    std::env::var(PARALLEL_ENV).ok()
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, log: &mut dyn Write) -> i32 {
    let records = match generate(&cfg.synth) {
        Ok(r) => r,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) =
        ensure_parent(out).and_then(|_| write_atomic(out, to_jsonl(&records).as_bytes()))
    {
        say!(log, "error: {e}");
        return EXIT_PARTIAL;
    }
    if cfg.verbosity > 0 {
        say!(
            log,
            "wrote {} records ({} classes x {}) to {}",
            records.len(),
            cfg.synth.n_classes,
            cfg.synth.samples_per_class,
            out.display()
        );
    }
    EXIT_OK
}

#[derive(Deserialize)]
struct RawLine {
    description: Option<serde_json::Value>,
}

fn raw_description(v: &serde_json::Value) -> Option<String> {
    let text = match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.as_str())
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        _ => return None,
    };
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_string())
}

/// Converts raw per-line objects to canonical records labelled `category`.
/// Returns the records and the rejected lines.
pub fn convert_raw(text: &str, category: &str) -> (Vec<ProductRecord>, Vec<Reject>) {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let reason = match serde_json::from_str::<RawLine>(line) {
            Err(e) => format!("malformed JSON: {e}"),
            Ok(RawLine { description: None }) => "missing description".to_string(),
            Ok(RawLine {
                description: Some(v),
            }) => match raw_description(&v) {
                Some(d) => {
                    records.push(ProductRecord::new(n, category, d));
                    continue;
                }
                None => "empty or non-text description".to_string(),
            },
        };
        rejects.push(Reject { line: n, reason });
    }
    (records, rejects)
}

pub fn cmd_convert(raw: &Path, out: &Path, category: &str, log: &mut dyn Write) -> i32 {
    if category.trim().is_empty() {
        say!(log, "error: --category must not be empty");
        return EXIT_USAGE;
    }
    let text = match std::fs::read_to_string(raw) {
        Ok(t) => t,
        Err(e) => {
            say!(log, "error: {}", Error::io(raw, e));
            return EXIT_USAGE;
        }
    };
    let (records, rejects) = convert_raw(&text, category);
    if let Err(e) =
        ensure_parent(out).and_then(|_| write_atomic(out, to_jsonl(&records).as_bytes()))
    {
        say!(log, "error: {e}");
        return EXIT_PARTIAL;
    }
    say!(
        log,
        "{}: kept {}, rejected {}",
        out.display(),
        records.len(),
        rejects.len()
    );
    for r in rejects.iter().take(10) {
        say!(log, "  line {}: {}", r.line, r.reason);
    }
    EXIT_OK
}

pub fn cmd_sweep(cfg: &RunConfig, log: &mut dyn Write) -> i32 {
    let sweep = match cfg.sweep_config() {
        Ok(s) => s,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let corpus_path = cfg.corpus_path();
    let loaded = match load_jsonl(&corpus_path) {
        Ok(c) => c,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let resolved = match cfg.to_json_value() {
        Ok(v) => v,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    if cfg.verbosity > 0 {
        say!(
            log,
            "sweeping K={}..={} over {} seed(s), {} records ({} rejected)",
            sweep.k_min,
            sweep.k_max,
            sweep.seeds.len(),
            loaded.records.len(),
            loaded.rejects.len()
        );
    }
    let outcome = match run_sweep_recorded(&sweep, &loaded.records, Some(&resolved)) {
        Ok(o) => o,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_PARTIAL;
        }
    };
    if !loaded.rejects.is_empty() {
        if let Err(e) = loaded.write_rejects(&cfg.output_dir.join(REJECTS_JSONL)) {
            say!(log, "warning: {e}");
        }
    }
    if cfg.verbosity > 0 {
        say!(
            log,
            "{} experiment(s) done ({} reused), {} failed; results in {}",
            outcome.rows.len(),
            outcome.reused,
            outcome.failures.len(),
            cfg.output_dir.display()
        );
    }
    for f in &outcome.failures {
        say!(log, "failed K={} seed={}: {}", f.k, f.seed, f.message);
    }
    if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

pub fn cmd_analyze(results_dir: &Path, include_k1: bool, log: &mut dyn Write) -> i32 {
    let rows = match read_sweep_csv(&results_dir.join(SWEEP_CSV)) {
        Ok(r) => r,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let report = match degradation_report(&rows, include_k1) {
        Ok(r) => r,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let written = report
        .to_json()
        .and_then(|j| write_atomic(&results_dir.join(ANALYSIS_JSON), j.as_bytes()));
    if let Err(e) = written {
        say!(log, "error: {e}");
        return EXIT_PARTIAL;
    }
    for (m, f) in &report.fits {
        say!(
            log,
            "{:<9} rate {:>8.4} %/class  R² {:.4}",
            m.label(),
            f.rate_percent_per_class,
            f.r_squared
        );
    }
    EXIT_OK
}

fn read_analysis(path: &Path) -> Result<Option<DegradationReport>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Per-class report of one stored experiment.
pub fn load_experiment_report(dir: &Path) -> Result<(MacroReport, Vec<String>)> {
    let manifest = read_experiment_manifest(dir)?;
    let p = dir.join(PER_CLASS_CSV);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let (per_class, names) = parse_per_class_csv(&text)?;
    let row = &manifest.row;
    Ok((
        MacroReport {
            k: per_class.len(),
            per_class,
            macro_precision: row.macro_precision,
            macro_recall: row.macro_recall,
            macro_f1: row.macro_f1,
            accuracy: row.accuracy,
            total_test_items: manifest.n_test as u64,
        },
        names,
    ))
}

pub fn cmd_report(results_dir: &Path, log: &mut dyn Write) -> i32 {
    let rows = match read_sweep_csv(&results_dir.join(SWEEP_CSV)) {
        Ok(r) => r,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    if rows.is_empty() {
        say!(log, "error: {} holds no rows", SWEEP_CSV);
        return EXIT_USAGE;
    }
    let analysis = match read_analysis(&results_dir.join(ANALYSIS_JSON)) {
        Ok(a) => a,
        Err(e) => {
            say!(log, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut code = EXIT_OK;
    let mut fail = |log: &mut dyn Write, e: Error| {
        say!(log, "error: {e}");
        code = EXIT_PARTIAL;
    };
    if let Err(e) = plot_metrics_vs_k(&rows, analysis.as_ref(), &results_dir.join(METRICS_SVG)) {
        fail(log, e);
    }
    let k_max = rows.iter().map(|r| r.k).max().unwrap_or(1);
    for row in rows.iter().filter(|r| r.k == k_max) {
        let name = row.experiment_name();
        let dir = results_dir.join(EXPERIMENTS_DIR).join(&name);
        let res = load_experiment_report(&dir).and_then(|(rep, names)| {
            plot_per_class(
                &rep,
                &names,
                &results_dir.join(format!("per_class-{name}.svg")),
            )
        });
        if let Err(e) = res {
            fail(log, e);
        }
    }
    let md = summarize(&rows, analysis.as_ref(), MANIFEST_JSON);
    if let Err(e) = write_atomic(&results_dir.join(SUMMARY_MD), md.as_bytes()) {
        fail(log, e);
    }
    say!(log, "report written to {}", results_dir.display());
    code
}

pub fn cmd_all(cfg: &RunConfig, log: &mut dyn Write) -> i32 {
    let corpus = cfg.corpus_path();
    if !corpus.exists() {
        let code = cmd_synth(cfg, &corpus, log);
        if code != EXIT_OK {
            return code;
        }
    }
    let mut worst = cmd_sweep(cfg, log);
    if worst == EXIT_USAGE {
        return worst;
    }
    for step in [
        cmd_analyze(&cfg.output_dir, cfg.include_k1, log),
        cmd_report(&cfg.output_dir, log),
    ] {
        worst = worst.max(step);
    }
    worst
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convert_maps_fields() {
        let raw = [
            r#"{"description": "A wooden guitar stand", "title": "x"}"#,
            r#"{"description": ["Soft cotton", "", "baby blanket"]}"#,
            r#"{"description": "   "}"#,
            r#"{"title": "no description"}"#,
            "not json",
            r#"{"description": 12}"#,
        ]
        .join("\n");
        let (recs, rejects) = convert_raw(&raw, "Baby");
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.category == "Baby"));
        assert_eq!(recs[1].description, "Soft cotton baby blanket");
        assert_eq!(
            rejects.iter().map(|r| r.line).collect::<Vec<_>>(),
            vec![3, 4, 5, 6]
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        let mut log = Vec::new();
        assert_eq!(
            run(["classcurve", "frobnicate"], None, &mut log),
            EXIT_USAGE
        );
        assert_eq!(
            run(["classcurve", "sweep", "--backend", "svm"], None, &mut log),
            EXIT_USAGE
        );
        assert_eq!(
            run(["classcurve", "sweep", "--k-max", "0"], None, &mut log),
            EXIT_USAGE
        );
        assert_eq!(
            run(["classcurve", "sweep"], Some("lots"), &mut log),
            EXIT_USAGE
        );
        assert_eq!(run(["classcurve", "--help"], None, &mut log), EXIT_OK);
    }
}
