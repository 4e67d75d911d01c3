//! Softmax classifiers trained from scratch on hashed features.
//!
//! Two backends share one output head: `linear` is multinomial logistic
//! regression, `mlp` adds a single tanh hidden layer with inverted dropout.
//! Parameters are split into a sparse input block (`dimension x width`,
//! row-major by feature) and a small dense block, so a mini-batch only
//! touches the input rows of features it contains.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector, VectorizerConfig};
use crate::util::{mix_seed, rng_from, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Linear,
    Mlp,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Linear => "linear",
            Backend::Mlp => "mlp",
        }
    }

    /// Stable numeric id used in seed derivation.
    pub fn id(self) -> u64 {
        match self {
            Backend::Linear => 1,
            Backend::Mlp => 2,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Backend::Linear),
            "mlp" => Ok(Backend::Mlp),
            other => Err(Error::arg(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConstants {
    fn default() -> Self {
        AdamConstants {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `None` selects the optimizer default (0.05 for sgd, 1e-3 for adam).
    #[serde(default)]
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

fn default_hidden() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            batch_size: 32,
            n_epochs: 3,
            dropout_rate: 0.1,
            backend: Backend::Linear,
            hidden_units: 64,
            seed: 0,
            optimizer: Optimizer::Adam,
            use_bias: true,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning hyperparameters verbatim, including the 2e-5 learning
    /// rate. Too small to converge from scratch within the step budget.
    pub fn reference() -> Self {
        TrainConfig {
            learning_rate: Some(2e-5),
            ..TrainConfig::default()
        }
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.optimizer {
            Optimizer::Sgd => 0.05,
            Optimizer::Adam => 1e-3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.effective_learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::arg(format!(
                "learning_rate must be positive, got {lr}"
            )));
        }
        if self.batch_size == 0 || self.n_epochs == 0 {
            return Err(Error::arg("batch_size and n_epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.backend == Backend::Mlp && self.hidden_units == 0 {
            return Err(Error::arg(
                "hidden_units must be positive for the mlp backend",
            ));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::arg("softmax input contains non-finite values"));
    }
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    Ok(p)
}

/// Replaces logits by probabilities and returns log-sum-exp of the logits.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in z.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch step count `floor(f * k * n_samples / batch * epochs)`, at
/// least 1. A relative slack of 1e-9 absorbs floating error in `f` so that
/// products that are mathematically whole are not floored one step short.
pub fn n_train_steps(f: f64, k: usize, n_samples: usize, batch: usize, epochs: usize) -> usize {
    assert!(f > 0.0 && f <= 1.0, "split fraction must lie in (0, 1]");
    assert!(k > 0 && n_samples > 0 && batch > 0 && epochs > 0);
    let x = f * k as f64 * n_samples as f64 / batch as f64 * epochs as f64;
    let n = (x + x * 1e-9).floor() as usize;
    n.max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_seconds: f64,
    pub learning_rate: f64,
    pub adam: Option<AdamConstants>,
    pub train_config: TrainConfig,
    pub vectorizer: VectorizerConfig,
}

/// Trained (or freshly initialized) softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub backend: Backend,
    pub k: usize,
    pub input_dimension: usize,
    pub hidden_units: usize,
    pub use_bias: bool,
    /// `input_dimension x width` where width is `k` (linear) or
    /// `hidden_units` (mlp).
    pub input_weights: Vec<f64>,
    /// linear: `[b (k)]`; mlp: `[b1 (h) | w2 (h x k) | b2 (k)]`.
    pub dense: Vec<f64>,
    pub metadata: Option<TrainingMetadata>,
}

/// Gradient with the input block restricted to the rows in `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub rows: Vec<u32>,
    pub row_grads: Vec<f64>,
    pub dense: Vec<f64>,
}

impl Gradient {
    /// Expands the input block to a full `dimension x width` array.
    pub fn input_dense(&self, width: usize, dimension: usize) -> Vec<f64> {
        let mut out = vec![0.0; dimension * width];
        for (slot, &r) in self.rows.iter().enumerate() {
            let r = r as usize;
            out[r * width..(r + 1) * width]
                .copy_from_slice(&self.row_grads[slot * width..(slot + 1) * width]);
        }
        out
    }
}

/// Dropout masks drawn for one batch. `None` disables dropout.
#[derive(Debug, Clone, Copy)]
pub struct DropoutDraw {
    pub rate: f64,
    pub seed: u64,
}

impl SoftmaxModel {
    /// Zero weights for `linear`; uniform `±1/sqrt(fan_in)` for `mlp`.
    pub fn init(
        backend: Backend,
        k: usize,
        input_dimension: usize,
        hidden_units: usize,
        use_bias: bool,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("class count must be at least 1"));
        }
        if input_dimension == 0 {
            return Err(Error::arg("input dimension must be positive"));
        }
        match backend {
            Backend::Linear => Ok(SoftmaxModel {
                backend,
                k,
                input_dimension,
                hidden_units: 0,
                use_bias,
                input_weights: vec![0.0; input_dimension * k],
                dense: vec![0.0; k],
                metadata: None,
            }),
            Backend::Mlp => {
                if hidden_units == 0 {
                    return Err(Error::arg("hidden_units must be positive"));
                }
                let h = hidden_units;
                let mut rng = rng_from(mix_seed(seed, &[INIT_TAG]));
                let s1 = 1.0 / (input_dimension as f64).sqrt();
                let s2 = 1.0 / (h as f64).sqrt();
                let input_weights = (0..input_dimension * h)
                    .map(|_| rng.gen_range(-s1..=s1))
                    .collect();
                let mut dense = vec![0.0; h + h * k + k];
                for w in &mut dense[h..h + h * k] {
                    *w = rng.gen_range(-s2..=s2);
                }
                Ok(SoftmaxModel {
                    backend,
                    k,
                    input_dimension,
                    hidden_units: h,
                    use_bias,
                    input_weights,
                    dense,
                    metadata: None,
                })
            }
        }
    }

    pub fn width(&self) -> usize {
        match self.backend {
            Backend::Linear => self.k,
            Backend::Mlp => self.hidden_units,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.input_weights.len() + self.dense.len()
    }

    /// Per-class weight vector `w_j` (1-based `j`) of the linear backend.
    pub fn class_weights(&self, j: usize) -> Option<Vec<f64>> {
        if self.backend != Backend::Linear || j == 0 || j > self.k {
            return None;
        }
        Some(
            (0..self.input_dimension)
                .map(|i| self.input_weights[i * self.k + j - 1])
                .collect(),
        )
    }

    pub fn output_biases(&self) -> &[f64] {
        &self.dense[self.dense.len() - self.k..]
    }

    fn check_dim(&self, q: &FeatureVector) -> Result<()> {
        if q.dimension != self.input_dimension {
            return Err(Error::arg(format!(
                "feature dimension {} does not match model input dimension {}",
                q.dimension, self.input_dimension
            )));
        }
        Ok(())
    }

    /// Pre-activations of the input layer: logits (linear) or hidden `z` (mlp).
    fn input_layer(&self, q: &FeatureVector, out: &mut [f64]) {
        let w = self.width();
        if self.use_bias {
            out.copy_from_slice(&self.dense[..w]);
        } else {
            out.fill(0.0);
        }
        for (i, v) in q.iter() {
            let row = &self.input_weights[i * w..(i + 1) * w];
            for (o, r) in out.iter_mut().zip(row) {
                *o += v * r;
            }
        }
    }

    /// Forward pass returning logits. For mlp, `hidden` receives the tanh
    /// activations before `mask` is applied.
    fn forward(&self, q: &FeatureVector, mask: Option<&[f64]>, hidden: &mut Vec<f64>) -> Vec<f64> {
        match self.backend {
            Backend::Linear => {
                let mut z = vec![0.0; self.k];
                self.input_layer(q, &mut z);
                z
            }
            Backend::Mlp => {
                let h = self.hidden_units;
                hidden.resize(h, 0.0);
                self.input_layer(q, hidden);
                for a in hidden.iter_mut() {
                    *a = a.tanh();
                }
                let w2 = &self.dense[h..h + h * self.k];
                let mut z = if self.use_bias {
                    self.dense[h + h * self.k..].to_vec()
                } else {
                    vec![0.0; self.k]
                };
                for (j, &t) in hidden.iter().enumerate() {
                    let a = mask.map_or(t, |m| t * m[j]);
                    for (c, zc) in z.iter_mut().enumerate() {
                        *zc += a * w2[j * self.k + c];
                    }
                }
                z
            }
        }
    }

    pub fn logits(&self, q: &FeatureVector) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        Ok(self.forward(q, None, &mut Vec::new()))
    }

    fn draw_masks(&self, n: usize, dropout: Option<DropoutDraw>) -> Option<Vec<f64>> {
        let d = dropout?;
        if self.backend != Backend::Mlp || d.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - d.rate;
        let mut rng = rng_from(d.seed);
        Some(
            (0..n * self.hidden_units)
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradient(
        &self,
        batch: &[(&FeatureVector, usize)],
        dropout: Option<DropoutDraw>,
    ) -> (f64, Gradient) {
        let w = self.width();
        let k = self.k;
        let mut rows: Vec<u32> = batch
            .iter()
            .flat_map(|(q, _)| q.indices.iter().copied())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let mut row_grads = vec![0.0; rows.len() * w];
        let mut dense = vec![0.0; self.dense.len()];
        let masks = self.draw_masks(batch.len(), dropout);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut hidden = Vec::new();
        let mut delta_in = vec![0.0; w];
        for (n, (q, y)) in batch.iter().enumerate() {
            let mask = masks.as_deref().map(|m| &m[n * w..(n + 1) * w]);
            let mut p = self.forward(q, mask, &mut hidden);
            let zy = p[y - 1];
            loss += softmax_in_place(&mut p) - zy;
            // dL/dlogit
            p[y - 1] -= 1.0;
            for d in p.iter_mut() {
                *d *= scale;
            }
            match self.backend {
                Backend::Linear => {
                    delta_in.copy_from_slice(&p);
                    if self.use_bias {
                        for (g, d) in dense.iter_mut().zip(&p) {
                            *g += d;
                        }
                    }
                }
                Backend::Mlp => {
                    let h = self.hidden_units;
                    let w2 = &self.dense[h..h + h * k];
                    for (j, &t) in hidden.iter().enumerate() {
                        let m = mask.map_or(1.0, |m| m[j]);
                        let a = t * m;
                        let mut back = 0.0;
                        for c in 0..k {
                            dense[h + j * k + c] += a * p[c];
                            back += w2[j * k + c] * p[c];
                        }
                        delta_in[j] = back * m * (1.0 - t * t);
                    }
                    if self.use_bias {
                        for (c, d) in p.iter().enumerate() {
                            dense[h + h * k + c] += d;
                        }
                        for j in 0..h {
                            dense[j] += delta_in[j];
                        }
                    }
                }
            }
            for (i, v) in q.iter() {
                let slot = rows.binary_search(&(i as u32)).expect("row collected");
                let g = &mut row_grads[slot * w..(slot + 1) * w];
                for (gj, dj) in g.iter_mut().zip(&delta_in) {
                    *gj += v * dj;
                }
            }
        }
        (
            loss * scale,
            Gradient {
                rows,
                row_grads,
                dense,
            },
        )
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, data: &[(&FeatureVector, usize)]) -> f64 {
        let mut hidden = Vec::new();
        let total: f64 = data
            .iter()
            .map(|(q, y)| {
                let mut z = self.forward(q, None, &mut hidden);
                let zy = z[y - 1];
                softmax_in_place(&mut z) - zy
            })
            .sum();
        total / data.len().max(1) as f64
    }

    pub fn all_finite(&self) -> bool {
        self.input_weights
            .iter()
            .chain(&self.dense)
            .all(|x| x.is_finite())
    }
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub parameters: usize,
    /// `|a - n| / max(|a|, |n|, floor)` maximized over parameters.
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

/// Compares every analytic partial derivative of the batch loss with a
/// central difference of step `h`. The same dropout masks are used for
/// every evaluation.
pub fn gradient_check(
    model: &SoftmaxModel,
    batch: &[(&FeatureVector, usize)],
    dropout: Option<DropoutDraw>,
    h: f64,
    floor: f64,
) -> GradientCheck {
    let (_, grad) = model.loss_and_gradient(batch, dropout);
    let analytic_in = grad.input_dense(model.width(), model.input_dimension);
    let mut probe = model.clone();
    let mut out = GradientCheck {
        parameters: 0,
        max_relative_error: 0.0,
        max_abs_error: 0.0,
    };
    let mut record = |a: f64, n: f64| {
        let err = (a - n).abs();
        out.parameters += 1;
        out.max_abs_error = out.max_abs_error.max(err);
        out.max_relative_error = out
            .max_relative_error
            .max(err / a.abs().max(n.abs()).max(floor));
    };
    for (i, &a) in analytic_in.iter().enumerate() {
        let x = probe.input_weights[i];
        probe.input_weights[i] = x + h;
        let up = probe.loss_and_gradient(batch, dropout).0;
        probe.input_weights[i] = x - h;
        let down = probe.loss_and_gradient(batch, dropout).0;
        probe.input_weights[i] = x;
        record(a, (up - down) / (2.0 * h));
    }
    for i in 0..model.dense.len() {
        let x = probe.dense[i];
        probe.dense[i] = x + h;
        let up = probe.loss_and_gradient(batch, dropout).0;
        probe.dense[i] = x - h;
        let down = probe.loss_and_gradient(batch, dropout).0;
        probe.dense[i] = x;
        record(grad.dense[i], (up - down) / (2.0 * h));
    }
    out
}

pub fn predict_proba(model: &SoftmaxModel, q: &FeatureVector) -> Result<Vec<f64>> {
    let mut z = model.logits(q)?;
    softmax_in_place(&mut z);
    Ok(z)
}

/// 1-based class index of the most probable class.
pub fn predict(model: &SoftmaxModel, q: &FeatureVector) -> Result<usize> {
    Ok(argmax(&model.logits(q)?) + 1)
}

const INIT_TAG: u64 = 0x494e4954;
const SHUFFLE_TAG: u64 = 0x5348_5546;
const DROPOUT_TAG: u64 = 0x44524f50;

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    adam: AdamConstants,
    m_in: Vec<f64>,
    v_in: Vec<f64>,
    m_dense: Vec<f64>,
    v_dense: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(model: &SoftmaxModel, cfg: &TrainConfig) -> Self {
        let (n_in, n_dense) = match cfg.optimizer {
            Optimizer::Sgd => (0, 0),
            Optimizer::Adam => (model.input_weights.len(), model.dense.len()),
        };
        OptimizerState {
            kind: cfg.optimizer,
            lr: cfg.effective_learning_rate(),
            adam: AdamConstants::default(),
            m_in: vec![0.0; n_in],
            v_in: vec![0.0; n_in],
            m_dense: vec![0.0; n_dense],
            v_dense: vec![0.0; n_dense],
            t: 0,
        }
    }

    /// Sgd updates touched rows exactly. Adam keeps dense moments for the
    /// dense block and updates moments of input rows only when the row
    /// appears in the batch (lazy Adam).
    fn step(&mut self, model: &mut SoftmaxModel, grad: &Gradient) {
        let w = model.width();
        match self.kind {
            Optimizer::Sgd => {
                for (slot, &r) in grad.rows.iter().enumerate() {
                    let r = r as usize;
                    let params = &mut model.input_weights[r * w..(r + 1) * w];
                    for (p, g) in params.iter_mut().zip(&grad.row_grads[slot * w..]) {
                        *p -= self.lr * g;
                    }
                }
                for (p, g) in model.dense.iter_mut().zip(&grad.dense) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let AdamConstants {
                    beta1,
                    beta2,
                    epsilon,
                } = self.adam;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let lr = self.lr;
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                };
                for (slot, &r) in grad.rows.iter().enumerate() {
                    let base = r as usize * w;
                    for j in 0..w {
                        update(
                            &mut model.input_weights[base + j],
                            &mut self.m_in[base + j],
                            &mut self.v_in[base + j],
                            grad.row_grads[slot * w + j],
                        );
                    }
                }
                for i in 0..model.dense.len() {
                    update(
                        &mut model.dense[i],
                        &mut self.m_dense[i],
                        &mut self.v_dense[i],
                        grad.dense[i],
                    );
                }
            }
        }
    }
}

/// Vectorizes the training split and trains for the scheduled number of
/// steps.
pub fn train(
    split: &DatasetSplit,
    vec_cfg: &VectorizerConfig,
    cfg: &TrainConfig,
) -> Result<SoftmaxModel> {
    vec_cfg.validate()?;
    let data: Vec<(FeatureVector, usize)> = split
        .train
        .par_iter()
        .map(|l| (featurize(&l.record.description, vec_cfg), l.class_index))
        .collect();
    if split.k == 0 {
        return Err(Error::arg("class count must be at least 1"));
    }
    let steps = n_train_steps(
        split.split_fraction,
        split.k,
        split.n_samples_per_class.max(1),
        cfg.batch_size.max(1),
        cfg.n_epochs.max(1),
    );
    train_vectors(&data, split.k, vec_cfg, cfg, steps)
}

/// Trains on pre-computed feature vectors for exactly `steps` mini-batch
/// updates. Batches are consumed from a stream of per-epoch permutations,
/// reshuffled with the seeded generator at every epoch boundary.
pub fn train_vectors(
    data: &[(FeatureVector, usize)],
    k: usize,
    vec_cfg: &VectorizerConfig,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<SoftmaxModel> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::arg("class count must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    if cfg.batch_size > data.len() {
        return Err(Error::arg(format!(
            "batch_size {} exceeds training-set size {}",
            cfg.batch_size,
            data.len()
        )));
    }
    if let Some((q, y)) = data
        .iter()
        .find(|(q, y)| q.dimension != vec_cfg.dimension || *y == 0 || *y > k)
    {
        return Err(Error::arg(format!(
            "training item with dimension {} and label {y} is inconsistent with k={k}, dimension={}",
            q.dimension, vec_cfg.dimension
        )));
    }
    let start = Instant::now();
    let mut model = SoftmaxModel::init(
        cfg.backend,
        k,
        vec_cfg.dimension,
        cfg.hidden_units,
        cfg.use_bias,
        cfg.seed,
    )?;
    let all: Vec<(&FeatureVector, usize)> = data.iter().map(|(q, y)| (q, *y)).collect();
    let initial_loss = model.loss(&all);
    let mut opt = OptimizerState::new(&model, cfg);
    let mut shuffle_rng = rng_from(mix_seed(cfg.seed, &[SHUFFLE_TAG]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..steps {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            let (q, y) = &data[order[cursor]];
            batch.push((q, *y));
            cursor += 1;
        }
        let dropout =
            (cfg.backend == Backend::Mlp && cfg.dropout_rate > 0.0).then(|| DropoutDraw {
                rate: cfg.dropout_rate,
                seed: mix_seed(cfg.seed, &[DROPOUT_TAG, step as u64]),
            });
        let (loss, grad) = model.loss_and_gradient(&batch, dropout);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        opt.step(&mut model, &grad);
    }
    if !model.all_finite() {
        return Err(Error::NonFiniteLoss {
            step: steps,
            loss: f64::NAN,
        });
    }
    let final_loss = model.loss(&all);
    model.metadata = Some(TrainingMetadata {
        steps,
        initial_loss,
        final_loss,
        train_seconds: start.elapsed().as_secs_f64(),
        learning_rate: opt.lr,
        adam: (cfg.optimizer == Optimizer::Adam).then_some(opt.adam),
        train_config: cfg.clone(),
        vectorizer: vec_cfg.clone(),
    });
    Ok(model)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CCKPT01\n";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    backend: Backend,
    k: usize,
    input_dimension: usize,
    hidden_units: usize,
    use_bias: bool,
    input_len: usize,
    dense_len: usize,
    metadata: Option<TrainingMetadata>,
}

impl SoftmaxModel {
    /// Checkpoint layout: 8-byte magic, little-endian u64 header length, JSON
    /// header (backend, shapes, configs, seed, metadata), then every
    /// parameter as a little-endian f64, input block first.
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&CheckpointHeader {
            backend: self.backend,
            k: self.k,
            input_dimension: self.input_dimension,
            hidden_units: self.hidden_units,
            use_bias: self.use_bias,
            input_len: self.input_weights.len(),
            dense_len: self.dense.len(),
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.input_weights.iter().chain(&self.dense) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("invalid checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body.get(..hlen).ok_or_else(|| bad("truncated header"))?)?;
        let params = &body[hlen..];
        if params.len() != 8 * (header.input_len + header.dense_len) {
            return Err(bad("parameter block has the wrong length"));
        }
        let mut floats = params
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let input_weights: Vec<f64> = floats.by_ref().take(header.input_len).collect();
        let dense: Vec<f64> = floats.collect();
        let model = SoftmaxModel {
            backend: header.backend,
            k: header.k,
            input_dimension: header.input_dimension,
            hidden_units: header.hidden_units,
            use_bias: header.use_bias,
            input_weights,
            dense,
            metadata: header.metadata,
        };
        let expected = SoftmaxModel::init(
            model.backend,
            model.k,
            model.input_dimension,
            model.hidden_units.max(1),
            model.use_bias,
            0,
        )?;
        if expected.input_weights.len() != model.input_weights.len()
            || expected.dense.len() != model.dense.len()
        {
            return Err(bad("shapes disagree with header"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_checkpoint_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        SoftmaxModel::from_checkpoint_bytes(&bytes)
    }
}
