//! Run configuration for the command-line tool.
//!
//! The file is JSON. Hyperparameters use flat names (`learning_rate`,
//! `batch_size`, `n_epochs`, `dropout_rate`, `split_fraction`,
//! `n_samples_per_class`, `max_tokens`); every field is optional and falls
//! back to its default. Command-line flags beat `CLASSCURVE_PARALLEL`, which
//! beats the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{Backend, Optimizer, TrainConfig};
use crate::corpus::{CategoryTable, SamplingConfig, SplitMode};
use crate::error::{Error, Result};
use crate::features::{VectorizerConfig, DEFAULT_DIMENSION};
use crate::sweep::{PoolMode, SweepConfig};
use crate::synth::SynthConfig;

pub const PARALLEL_ENV: &str = "CLASSCURVE_PARALLEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Canonical JSON-lines corpus read by `sweep`; `synth` and `all` write it.
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub k_min: usize,
    pub k_max: usize,
    pub seeds: Vec<u64>,
    /// Category order; the default list when absent.
    pub categories: Option<CategoryTable>,
    pub backend: Backend,
    pub optimizer: Optimizer,
    /// `None` picks the optimizer's default.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub dropout_rate: f64,
    pub hidden_units: usize,
    pub use_bias: bool,
    pub split_fraction: f64,
    pub split_mode: SplitMode,
    pub n_samples_per_class: usize,
    pub min_description_chars: usize,
    pub max_tokens: usize,
    pub dimension: usize,
    pub ngram_orders: Vec<usize>,
    pub hash_seed: u64,
    pub lowercase: bool,
    pub pool_mode: PoolMode,
    pub record_timing: bool,
    pub include_k1: bool,
    /// Concurrent experiments; 0 lets the thread pool decide.
    pub parallel: usize,
    /// 0 is quiet, 1 prints progress.
    pub verbosity: u8,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sampling = SamplingConfig::default();
        let vec_cfg = VectorizerConfig::default();
        let synth = SynthConfig::default();
        RunConfig {
            corpus: None,
            output_dir: PathBuf::from("results"),
            k_min: 1,
            k_max: 20,
            seeds: vec![0],
            categories: None,
            backend: train.backend,
            optimizer: train.optimizer,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            n_epochs: train.n_epochs,
            dropout_rate: train.dropout_rate,
            hidden_units: train.hidden_units,
            use_bias: train.use_bias,
            split_fraction: sampling.split_fraction,
            split_mode: sampling.split_mode,
            // sized for the bundled synthetic corpus
            n_samples_per_class: synth.samples_per_class,
            min_description_chars: sampling.min_description_chars,
            max_tokens: vec_cfg.max_tokens,
            dimension: DEFAULT_DIMENSION,
            ngram_orders: vec_cfg.ngram_orders,
            hash_seed: vec_cfg.hash_seed,
            lowercase: vec_cfg.lowercase,
            pool_mode: PoolMode::default(),
            record_timing: false,
            include_k1: true,
            parallel: 0,
            verbosity: 1,
            synth,
        }
    }
}

/// Values given on the command line; `None` leaves the config untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub backend: Option<Backend>,
    pub parallel: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Loads `path` (or defaults), then applies the environment and the
    /// overrides in increasing priority.
    pub fn resolve(
        path: Option<&Path>,
        env_parallel: Option<&str>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(v) = env_parallel {
            cfg.parallel = v.trim().parse().map_err(|_| {
                Error::arg(format!(
                    "{PARALLEL_ENV} must be a non-negative integer, got {v:?}"
                ))
            })?;
        }
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(k) = o.k_min {
            self.k_min = k;
        }
        if let Some(k) = o.k_max {
            self.k_max = k;
        }
        if let Some(b) = o.backend {
            self.backend = b;
        }
        if let Some(p) = o.parallel {
            self.parallel = p;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus
            .clone()
            .unwrap_or_else(|| self.output_dir.join("corpus.jsonl"))
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let cfg = SweepConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            category_table: self
                .categories
                .clone()
                .unwrap_or_else(CategoryTable::default_table),
            sampling: SamplingConfig {
                n_samples_per_class: self.n_samples_per_class,
                min_description_chars: self.min_description_chars,
                split_fraction: self.split_fraction,
                split_mode: self.split_mode,
                seed: 0,
            },
            vectorizer: VectorizerConfig {
                dimension: self.dimension,
                ngram_orders: self.ngram_orders.clone(),
                max_tokens: self.max_tokens,
                hash_seed: self.hash_seed,
                lowercase: self.lowercase,
            },
            training: TrainConfig {
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                n_epochs: self.n_epochs,
                dropout_rate: self.dropout_rate,
                backend: self.backend,
                hidden_units: self.hidden_units,
                seed: 0,
                optimizer: self.optimizer,
                use_bias: self.use_bias,
            },
            seeds: self.seeds.clone(),
            output_dir: self.output_dir.clone(),
            pool_mode: self.pool_mode,
            record_timing: self.record_timing,
            parallel: self.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
