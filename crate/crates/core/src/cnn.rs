//! Sentence CNN over frozen pretrained embeddings.
//!
//! Per kernel size: 1-D convolution over time, ReLU, max-over-time. The
//! pooled features are concatenated, passed through dropout (training only)
//! and a fully-connected layer to two logits. Forward and backward passes are
//! written out by hand; the optimizer is Adam with decoupled weight decay.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::balance::ClassWeights;
use crate::corpus::{EmbeddingTable, Label, Labeled};
use crate::error::{Error, Result};
use crate::eval::prf_binary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub dropout_rate: f64,
    pub max_len: usize,
    pub embedding_dim: usize,
}

impl CnnConfig {
    /// 100 filters each of widths 3, 4 and 5; dropout 0.5; 400 tokens.
    pub fn with_dim(embedding_dim: usize) -> Self {
        Self {
            kernel_sizes: vec![3, 4, 5],
            filters_per_size: 100,
            dropout_rate: 0.5,
            max_len: 400,
            embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad(format!(
                "kernel sizes must be ≥ 1, got {:?}",
                self.kernel_sizes
            ));
        }
        if self.filters_per_size == 0 || self.embedding_dim == 0 {
            return bad("filters and embedding dimension must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.max_len < self.max_kernel() {
            return bad(format!(
                "max_len {} shorter than the widest kernel",
                self.max_len
            ));
        }
        Ok(())
    }

    pub fn max_kernel(&self) -> usize {
        self.kernel_sizes.iter().copied().max().unwrap_or(1)
    }

    pub fn pooled_len(&self) -> usize {
        self.filters_per_size * self.kernel_sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "invalid optimizer settings {self:?}"
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Row-major `rows × cols` matrix; one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Looks every token up (OOV → zeros), truncates to `max_len` and zero-pads
/// up to `min_rows`.
pub fn embed<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    max_len: usize,
    min_rows: usize,
) -> Matrix {
    let n = tokens.len().min(max_len);
    let mut m = Matrix::zeros(n.max(min_rows), table.dim());
    for (i, tok) in tokens.iter().take(n).enumerate() {
        m.data[i * table.dim()..(i + 1) * table.dim()].copy_from_slice(table.lookup(tok.as_ref()));
    }
    m
}

/// All trainable parameters. Conv weights are laid out `[offset][dim][filter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub conv_weights: Vec<Vec<f64>>,
    pub conv_biases: Vec<Vec<f64>>,
    /// `[pooled][class]`.
    pub fc_weights: Vec<f64>,
    pub fc_bias: Vec<f64>,
}

impl CnnParams {
    pub fn zeros(cfg: &CnnConfig) -> Self {
        Self {
            conv_weights: cfg
                .kernel_sizes
                .iter()
                .map(|&k| vec![0.0; k * cfg.embedding_dim * cfg.filters_per_size])
                .collect(),
            conv_biases: cfg
                .kernel_sizes
                .iter()
                .map(|_| vec![0.0; cfg.filters_per_size])
                .collect(),
            fc_weights: vec![0.0; cfg.pooled_len() * 2],
            fc_bias: vec![0.0; 2],
        }
    }

    pub fn groups(&self) -> Vec<&[f64]> {
        let mut g: Vec<&[f64]> = Vec::new();
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            g.push(w);
            g.push(b);
        }
        g.push(&self.fc_weights);
        g.push(&self.fc_bias);
        g
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut g: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self
            .conv_weights
            .iter_mut()
            .zip(self.conv_biases.iter_mut())
        {
            g.push(w);
            g.push(b);
        }
        g.push(&mut self.fc_weights);
        g.push(&mut self.fc_bias);
        g
    }

    fn add_scaled(&mut self, other: &CnnParams, c: f64) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
    }

    fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|g| g.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub params: CnnParams,
}

impl Artifact for CnnModel {
    const FORMAT: &'static str = "cfx-cnn-model";
    const VERSION: u32 = 1;
}

impl CnnModel {
    /// Uniform(±√(1/fan_in)) weights, zero conv biases.
    pub fn init(config: CnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = CnnParams::zeros(&config);
        for (w, &k) in params.conv_weights.iter_mut().zip(&config.kernel_sizes) {
            let bound = (1.0 / (k * config.embedding_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            w.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        }
        let bound = (1.0 / config.pooled_len() as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        params
            .fc_weights
            .iter_mut()
            .for_each(|x| *x = dist.sample(&mut rng));
        params
            .fc_bias
            .iter_mut()
            .for_each(|x| *x = dist.sample(&mut rng));
        Ok(Self { config, params })
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Max-over-time ReLU activations, `filters_per_size` per kernel size.
    pub pooled: Vec<f64>,
    /// Time step that produced each pooled value.
    pub argmax: Vec<usize>,
    /// Per-feature dropout multiplier (all 1 at inference).
    pub mask: Vec<f64>,
    /// Input to the fully-connected layer.
    pub fc_input: Vec<f64>,
}

pub fn forward(
    model: &CnnModel,
    x: &Matrix,
    train_mode: bool,
    dropout_seed: u64,
) -> Result<([f64; 2], ForwardCache)> {
    let cfg = &model.config;
    if x.cols != cfg.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.embedding_dim,
            found: x.cols,
        });
    }
    if x.rows < cfg.max_kernel() {
        return Err(Error::DimensionMismatch {
            expected: cfg.max_kernel(),
            found: x.rows,
        });
    }
    let nf = cfg.filters_per_size;
    let dim = cfg.embedding_dim;
    let mut pooled = vec![0.0; cfg.pooled_len()];
    let mut argmax = vec![0usize; cfg.pooled_len()];
    let mut z = vec![0.0; nf];
    for (g, &k) in cfg.kernel_sizes.iter().enumerate() {
        let w = &model.params.conv_weights[g];
        let b = &model.params.conv_biases[g];
        let out = &mut pooled[g * nf..(g + 1) * nf];
        let arg = &mut argmax[g * nf..(g + 1) * nf];
        for p in 0..=x.rows - k {
            z.copy_from_slice(b);
            for j in 0..k {
                let row = x.row(p + j);
                for (d, &xv) in row.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w[(j * dim + d) * nf..(j * dim + d + 1) * nf];
                    z.iter_mut().zip(wrow).for_each(|(zf, wf)| *zf += xv * wf);
                }
            }
            for f in 0..nf {
                let a = z[f].max(0.0);
                if p == 0 || a > out[f] {
                    out[f] = a;
                    arg[f] = p;
                }
            }
        }
    }
    let mask: Vec<f64> = if train_mode && cfg.dropout_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let keep = 1.0 / (1.0 - cfg.dropout_rate);
        (0..pooled.len())
            .map(|_| {
                if rng.gen::<f64>() < cfg.dropout_rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect()
    } else {
        vec![1.0; pooled.len()]
    };
    let fc_input: Vec<f64> = pooled.iter().zip(&mask).map(|(a, m)| a * m).collect();
    let mut logits = [model.params.fc_bias[0], model.params.fc_bias[1]];
    for (i, &h) in fc_input.iter().enumerate() {
        logits[0] += h * model.params.fc_weights[2 * i];
        logits[1] += h * model.params.fc_weights[2 * i + 1];
    }
    Ok((
        logits,
        ForwardCache {
            pooled,
            argmax,
            mask,
            fc_input,
        },
    ))
}

/// Gradients of the loss with respect to every parameter, given `dlogits`.
pub fn backward(
    model: &CnnModel,
    x: &Matrix,
    cache: &ForwardCache,
    dlogits: [f64; 2],
) -> CnnParams {
    let cfg = &model.config;
    let mut grads = CnnParams::zeros(cfg);
    backward_into(model, x, cache, dlogits, &mut grads);
    grads
}

fn backward_into(
    model: &CnnModel,
    x: &Matrix,
    cache: &ForwardCache,
    dlogits: [f64; 2],
    grads: &mut CnnParams,
) {
    let cfg = &model.config;
    let nf = cfg.filters_per_size;
    let dim = cfg.embedding_dim;
    grads.fc_bias[0] += dlogits[0];
    grads.fc_bias[1] += dlogits[1];
    for (i, &h) in cache.fc_input.iter().enumerate() {
        grads.fc_weights[2 * i] += h * dlogits[0];
        grads.fc_weights[2 * i + 1] += h * dlogits[1];
    }
    for (g, &k) in cfg.kernel_sizes.iter().enumerate() {
        let gw = &mut grads.conv_weights[g];
        let gb = &mut grads.conv_biases[g];
        for f in 0..nf {
            let i = g * nf + f;
            if cache.pooled[i] <= 0.0 || cache.mask[i] == 0.0 {
                continue;
            }
            let fw = &model.params.fc_weights;
            let dz = cache.mask[i] * (fw[2 * i] * dlogits[0] + fw[2 * i + 1] * dlogits[1]);
            gb[f] += dz;
            let p = cache.argmax[i];
            for j in 0..k {
                for (d, &xv) in x.row(p + j).iter().enumerate() {
                    gw[(j * dim + d) * nf + f] += xv * dz;
                }
            }
        }
    }
}

/// `loss = w(label) · −log softmax(logits)[label]` and its gradient.
pub fn loss_weighted_ce(logits: [f64; 2], label: Label, weights: &ClassWeights) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let probs = [e[0] / z, e[1] / z];
    let y = label.as_u8() as usize;
    let w = weights.get(label);
    let loss = w * (m + z.ln() - logits[y]);
    let mut grad = [w * probs[0], w * probs[1]];
    grad[y] -= w;
    (loss, grad)
}

fn example_loss(model: &CnnModel, x: &Matrix, label: Label, weights: &ClassWeights) -> Result<f64> {
    let (logits, _) = forward(model, x, false, 0)?;
    Ok(loss_weighted_ce(logits, label, weights).0)
}

/// Largest relative error `|a − n| / max(|a|, |n|, 1e-8)` between analytic
/// gradients and central finite differences over every parameter (dropout off).
pub fn gradient_check(
    model: &CnnModel,
    x: &Matrix,
    label: Label,
    weights: &ClassWeights,
    epsilon: f64,
) -> Result<f64> {
    let (logits, cache) = forward(model, x, false, 0)?;
    let (_, dlogits) = loss_weighted_ce(logits, label, weights);
    let analytic = backward(model, x, &cache, dlogits);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let n_groups = analytic.groups().len();
    for g in 0..n_groups {
        let len = analytic.groups()[g].len();
        for i in 0..len {
            let orig = probe.params.groups()[g][i];
            probe.params.groups_mut()[g][i] = orig + epsilon;
            let plus = example_loss(&probe, x, label, weights)?;
            probe.params.groups_mut()[g][i] = orig - epsilon;
            let minus = example_loss(&probe, x, label, weights)?;
            probe.params.groups_mut()[g][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.groups()[g][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: OptimizerConfig,
    m: CnnParams,
    v: CnnParams,
    step: i32,
}

impl AdamW {
    pub fn new(cfg: OptimizerConfig, like: &CnnModel) -> Self {
        Self {
            m: CnnParams::zeros(&like.config),
            v: CnnParams::zeros(&like.config),
            cfg,
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut CnnParams, grads: &CnnParams) {
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let groups = params
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(self.m.groups_mut().into_iter().zip(self.v.groups_mut()));
        for ((p, g), (m, v)) in groups {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.lr * c.weight_decay * p[i];
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnExample {
    pub tokens: Vec<String>,
    pub label: Label,
}

impl Labeled for CnnExample {
    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnTrainResult {
    /// Parameters from the epoch with the best validation F1.
    pub model: CnnModel,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochStats>,
}

pub fn predict_cnn<S: AsRef<str>>(
    model: &CnnModel,
    tokens: &[S],
    table: &EmbeddingTable,
) -> Result<(Label, [f64; 2])> {
    let x = embed(
        tokens,
        table,
        model.config.max_len,
        model.config.max_kernel(),
    );
    let (logits, _) = forward(model, &x, false, 0)?;
    Ok((Label::from_bool(logits[1] >= logits[0]), logits))
}

/// Mini-batch training; after every epoch the validation F1 is measured and
/// the best-scoring parameters so far are kept.
pub fn train_cnn(
    train: &[CnnExample],
    val: &[CnnExample],
    table: &EmbeddingTable,
    cnn_cfg: &CnnConfig,
    opt_cfg: &OptimizerConfig,
    class_weights: Option<ClassWeights>,
) -> Result<CnnTrainResult> {
    opt_cfg.validate()?;
    cnn_cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput(
            "CNN training needs non-empty train and validation sets",
        ));
    }
    if cnn_cfg.embedding_dim != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: cnn_cfg.embedding_dim,
            found: table.dim(),
        });
    }
    let weights = class_weights.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(opt_cfg.seed);
    let mut model = CnnModel::init(cnn_cfg.clone(), rng.next_u64())?;
    let mut opt = AdamW::new(opt_cfg.clone(), &model);
    let min_rows = cnn_cfg.max_kernel();
    let val_gold: Vec<Label> = val.iter().map(|e| e.label).collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, CnnParams)> = None;
    let mut history = Vec::with_capacity(opt_cfg.epochs);
    let mut grads = CnnParams::zeros(cnn_cfg);
    for epoch in 1..=opt_cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(opt_cfg.batch_size).enumerate() {
            for g in grads.groups_mut() {
                g.fill(0.0);
            }
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train[i];
                let x = embed(&ex.tokens, table, cnn_cfg.max_len, min_rows);
                let (logits, cache) = forward(&model, &x, true, rng.next_u64())?;
                let (loss, dlogits) = loss_weighted_ce(logits, ex.label, &weights);
                batch_loss += loss;
                backward_into(
                    &model,
                    &x,
                    &cache,
                    [dlogits[0] * scale, dlogits[1] * scale],
                    &mut grads,
                );
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            epoch_loss += batch_loss;
            opt.update(&mut model.params, &grads);
        }
        let preds: Vec<Label> = val
            .iter()
            .map(|e| predict_cnn(&model, &e.tokens, table).map(|p| p.0))
            .collect::<Result<_>>()?;
        let f1 = prf_binary(&val_gold, &preds)?.f1;
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_f1: f1,
        });
        if best.as_ref().is_none_or(|b| f1 > b.1) {
            best = Some((epoch, f1, model.params.clone()));
        }
    }
    let (best_epoch, best_val_f1, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(CnnTrainResult {
        model,
        best_epoch,
        best_val_f1,
        history,
    })
}

impl CnnParams {
    /// `self += c · other`; exposed for tests that probe linearity.
    pub fn axpy(&mut self, c: f64, other: &CnnParams) {
        self.add_scaled(other, c);
    }
}
