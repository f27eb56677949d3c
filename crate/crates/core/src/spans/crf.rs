//! Linear-chain CRF over B/I/O with sparse indicator features.
//!
//! A path `y` over `T` positions scores
//! `start[y0] + Σ_t unary(t, y_t) + Σ_t trans[y_{t-1}][y_t] + stop[y_{T-1}]`
//! where `unary(t, y)` sums the weights of the features active at `t`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{is_if_word, is_wish_word, ModalLexicon};
use crate::text::{Bio, Role, TagSequence};

pub const N_TAGS: usize = 3;

/// Feature ids active at each position.
pub type Compiled = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfWeights {
    /// `unary[feature][tag]`.
    pub unary: Vec<[f64; N_TAGS]>,
    /// `transition[from][to]`.
    pub transition: [[f64; N_TAGS]; N_TAGS],
    pub start: [f64; N_TAGS],
    pub stop: [f64; N_TAGS],
}

const DENSE: usize = N_TAGS * N_TAGS + 2 * N_TAGS;

impl CrfWeights {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            unary: vec![[0.0; N_TAGS]; n_features],
            transition: [[0.0; N_TAGS]; N_TAGS],
            start: [0.0; N_TAGS],
            stop: [0.0; N_TAGS],
        }
    }

    pub fn n_features(&self) -> usize {
        self.unary.len()
    }

    /// Flat parameter count: transitions, start, stop, then unary.
    pub fn n_params(&self) -> usize {
        DENSE + N_TAGS * self.unary.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        match i {
            0..=8 => self.transition[i / N_TAGS][i % N_TAGS],
            9..=11 => self.start[i - 9],
            12..=14 => self.stop[i - 12],
            _ => self.unary[(i - DENSE) / N_TAGS][(i - DENSE) % N_TAGS],
        }
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0..=8 => &mut self.transition[i / N_TAGS][i % N_TAGS],
            9..=11 => &mut self.start[i - 9],
            12..=14 => &mut self.stop[i - 12],
            _ => &mut self.unary[(i - DENSE) / N_TAGS][(i - DENSE) % N_TAGS],
        }
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.transition.iter_mut().flatten().for_each(&mut f);
        self.start.iter_mut().for_each(&mut f);
        self.stop.iter_mut().for_each(&mut f);
        self.unary.iter_mut().flatten().for_each(&mut f);
    }

    fn for_each(&self, mut f: impl FnMut(f64)) {
        self.transition.iter().flatten().for_each(|&x| f(x));
        self.start.iter().for_each(|&x| f(x));
        self.stop.iter().for_each(|&x| f(x));
        self.unary.iter().flatten().for_each(|&x| f(x));
    }

    pub fn squared_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each(|x| s += x * x);
        s
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|x| ok &= x.is_finite());
        ok
    }

    /// Per-position tag scores from the unary weights.
    pub fn unary_scores(&self, feats: &[Vec<usize>]) -> Vec<[f64; N_TAGS]> {
        feats
            .iter()
            .map(|active| {
                let mut s = [0.0; N_TAGS];
                for &f in active {
                    for (y, w) in self.unary[f].iter().enumerate() {
                        s[y] += w;
                    }
                }
                s
            })
            .collect()
    }

    pub fn path_score(&self, feats: &[Vec<usize>], tags: &[Bio]) -> f64 {
        let u = self.unary_scores(feats);
        let mut s = 0.0;
        for (t, tag) in tags.iter().enumerate() {
            let y = tag.index();
            s += u[t][y];
            s += if t == 0 {
                self.start[y]
            } else {
                self.transition[tags[t - 1].index()][y]
            };
        }
        if let Some(last) = tags.last() {
            s += self.stop[last.index()];
        }
        s
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log partition from both directions plus posterior marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub log_z: f64,
    pub log_z_backward: f64,
    /// `node[t][y] = P(y_t = y)`.
    pub node: Vec<[f64; N_TAGS]>,
    /// `edge[t][a][b] = P(y_t = a, y_{t+1} = b)`.
    pub edge: Vec<[[f64; N_TAGS]; N_TAGS]>,
}

fn check_len(t: usize) -> Result<()> {
    if t == 0 {
        Err(Error::EmptyInput(
            "CRF sequences need at least one position",
        ))
    } else {
        Ok(())
    }
}

pub fn forward_backward(w: &CrfWeights, feats: &[Vec<usize>]) -> Result<ForwardBackward> {
    check_len(feats.len())?;
    let n = feats.len();
    let u = w.unary_scores(feats);
    let mut alpha = vec![[0.0; N_TAGS]; n];
    let mut beta = vec![[0.0; N_TAGS]; n];
    for y in 0..N_TAGS {
        alpha[0][y] = w.start[y] + u[0][y];
        beta[n - 1][y] = w.stop[y];
    }
    let mut buf = [0.0; N_TAGS];
    for t in 1..n {
        for y in 0..N_TAGS {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = alpha[t - 1][p] + w.transition[p][y];
            }
            alpha[t][y] = logsumexp(&buf) + u[t][y];
        }
    }
    for t in (0..n - 1).rev() {
        for y in 0..N_TAGS {
            for (q, b) in buf.iter_mut().enumerate() {
                *b = w.transition[y][q] + u[t + 1][q] + beta[t + 1][q];
            }
            beta[t][y] = logsumexp(&buf);
        }
    }
    let log_z = logsumexp(&std::array::from_fn::<f64, N_TAGS, _>(|y| {
        alpha[n - 1][y] + w.stop[y]
    }));
    let log_z_backward = logsumexp(&std::array::from_fn::<f64, N_TAGS, _>(|y| {
        w.start[y] + u[0][y] + beta[0][y]
    }));
    let node = (0..n)
        .map(|t| std::array::from_fn(|y| (alpha[t][y] + beta[t][y] - log_z).exp()))
        .collect();
    let edge = (0..n - 1)
        .map(|t| {
            std::array::from_fn(|a| {
                std::array::from_fn(|b| {
                    (alpha[t][a] + w.transition[a][b] + u[t + 1][b] + beta[t + 1][b] - log_z).exp()
                })
            })
        })
        .collect();
    Ok(ForwardBackward {
        log_z,
        log_z_backward,
        node,
        edge,
    })
}

/// Adds `scale ·` expected feature counts under the model to `acc`.
pub fn accumulate_expected(
    feats: &[Vec<usize>],
    fb: &ForwardBackward,
    scale: f64,
    acc: &mut CrfWeights,
) {
    for (t, active) in feats.iter().enumerate() {
        for &f in active {
            for y in 0..N_TAGS {
                acc.unary[f][y] += scale * fb.node[t][y];
            }
        }
    }
    let last = feats.len() - 1;
    for y in 0..N_TAGS {
        acc.start[y] += scale * fb.node[0][y];
        acc.stop[y] += scale * fb.node[last][y];
    }
    for e in &fb.edge {
        for (row, e_row) in acc.transition.iter_mut().zip(e) {
            for (x, v) in row.iter_mut().zip(e_row) {
                *x += scale * v;
            }
        }
    }
}

/// Adds `scale ·` the feature counts of one tag path to `acc`.
pub fn accumulate_empirical(feats: &[Vec<usize>], tags: &[Bio], scale: f64, acc: &mut CrfWeights) {
    for (t, (active, tag)) in feats.iter().zip(tags).enumerate() {
        let y = tag.index();
        for &f in active {
            acc.unary[f][y] += scale;
        }
        if t > 0 {
            acc.transition[tags[t - 1].index()][y] += scale;
        }
    }
    if let (Some(first), Some(last)) = (tags.first(), tags.last()) {
        acc.start[first.index()] += scale;
        acc.stop[last.index()] += scale;
    }
}

/// Negative log-likelihood of `tags`; adds `scale · ∂NLL/∂w` to `grad`.
pub fn nll_and_gradient(
    w: &CrfWeights,
    feats: &[Vec<usize>],
    tags: &[Bio],
    scale: f64,
    grad: &mut CrfWeights,
) -> Result<f64> {
    if feats.len() != tags.len() {
        return Err(Error::LengthMismatch {
            left: feats.len(),
            right: tags.len(),
        });
    }
    let fb = forward_backward(w, feats)?;
    accumulate_expected(feats, &fb, scale, grad);
    accumulate_empirical(feats, tags, -scale, grad);
    Ok(fb.log_z - w.path_score(feats, tags))
}

pub fn nll(w: &CrfWeights, feats: &[Vec<usize>], tags: &[Bio]) -> Result<f64> {
    Ok(forward_backward(w, feats)?.log_z - w.path_score(feats, tags))
}

/// Highest-scoring path and its score. Ties go to the lower tag (B < I < O)
/// both at backpointers and at the final position.
pub fn viterbi(w: &CrfWeights, feats: &[Vec<usize>]) -> Result<(Vec<Bio>, f64)> {
    check_len(feats.len())?;
    let n = feats.len();
    let u = w.unary_scores(feats);
    let mut delta = vec![[0.0; N_TAGS]; n];
    let mut back = vec![[0usize; N_TAGS]; n];
    for y in 0..N_TAGS {
        delta[0][y] = w.start[y] + u[0][y];
    }
    for t in 1..n {
        for y in 0..N_TAGS {
            let mut best = 0;
            for p in 1..N_TAGS {
                if delta[t - 1][p] + w.transition[p][y] > delta[t - 1][best] + w.transition[best][y]
                {
                    best = p;
                }
            }
            delta[t][y] = delta[t - 1][best] + w.transition[best][y] + u[t][y];
            back[t][y] = best;
        }
    }
    let mut last = 0;
    for y in 1..N_TAGS {
        if delta[n - 1][y] + w.stop[y] > delta[n - 1][last] + w.stop[last] {
            last = y;
        }
    }
    let score = delta[n - 1][last] + w.stop[last];
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path.into_iter().map(Bio::from_index).collect(), score))
}

/// Indicator feature keys for every position. `upos` may be absent when no
/// parse is available, in which case the POS feature is left out.
pub fn extract_features<S: AsRef<str>>(
    tokens: &[S],
    upos: Option<&[String]>,
    lexicon: &ModalLexicon,
) -> Vec<Vec<String>> {
    let n = tokens.len();
    let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    (0..n)
        .map(|i| {
            let mut f = vec!["bias".to_string(), format!("w={}", lower[i])];
            if let Some(tag) = upos.and_then(|u| u.get(i)) {
                f.push(format!("pos={tag}"));
            }
            if is_if_word(&lower[i]) {
                f.push("is_if".into());
            }
            if is_wish_word(&lower[i]) {
                f.push("is_wish".into());
            }
            if lexicon.contains(&lower[i]) {
                f.push("modal".into());
            }
            f.push(match i.checked_sub(1) {
                Some(p) => format!("prev={}", lower[p]),
                None => "prev=<s>".into(),
            });
            f.push(match lower.get(i + 1) {
                Some(next) => format!("next={next}"),
                None => "next=</s>".into(),
            });
            f.push(
                if i == 0 {
                    "bucket=first"
                } else if i + 1 == n {
                    "bucket=last"
                } else {
                    "bucket=interior"
                }
                .into(),
            );
            f
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfTrainConfig {
    pub l2_lambda: f64,
    pub lr: f64,
    /// Epoch `e` (0-based) uses `lr / (1 + lr_decay · e)`.
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            lr: 0.1,
            lr_decay: 0.1,
            epochs: 25,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl CrfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.l2_lambda > 0.0 && self.lr_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "CRF needs lr > 0, l2_lambda > 0 and lr_decay ≥ 0 (got {}, {}, {})",
                self.lr, self.l2_lambda, self.lr_decay
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "CRF epochs and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One training sentence for a single role.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfExample {
    pub tokens: Vec<String>,
    pub upos: Option<Vec<String>>,
    pub tags: Vec<Bio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub role: Role,
    pub lexicon: ModalLexicon,
    /// Feature key → row of `weights.unary`.
    pub features: BTreeMap<String, usize>,
    pub weights: CrfWeights,
}

impl CrfModel {
    pub fn new(role: Role, lexicon: ModalLexicon, features: BTreeMap<String, usize>) -> Self {
        let weights = CrfWeights::zeros(features.len());
        Self {
            role,
            lexicon,
            features,
            weights,
        }
    }

    /// Maps feature keys to ids, dropping keys unseen in training.
    pub fn compile(&self, keys: &[Vec<String>]) -> Compiled {
        keys.iter()
            .map(|pos| {
                pos.iter()
                    .filter_map(|k| self.features.get(k).copied())
                    .collect()
            })
            .collect()
    }

    pub fn featurize<S: AsRef<str>>(&self, tokens: &[S], upos: Option<&[String]>) -> Compiled {
        self.compile(&extract_features(tokens, upos, &self.lexicon))
    }

    pub fn decode<S: AsRef<str>>(
        &self,
        tokens: &[S],
        upos: Option<&[String]>,
    ) -> Result<TagSequence> {
        let (tags, _) = viterbi(&self.weights, &self.featurize(tokens, upos))?;
        Ok(TagSequence {
            tags,
            role: self.role,
        })
    }
}

/// Mean NLL plus `(λ/2)‖w‖²` over compiled examples.
pub fn objective(w: &CrfWeights, data: &[(Compiled, Vec<Bio>)], l2_lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for (feats, tags) in data {
        total += nll(w, feats, tags)?;
    }
    Ok(total / data.len() as f64 + 0.5 * l2_lambda * w.squared_norm())
}

/// Mini-batch gradient descent on [`objective`]. The feature vocabulary is
/// every key seen in `data`.
pub fn train_crf(
    data: &[CrfExample],
    role: Role,
    cfg: &CrfTrainConfig,
    lexicon: &ModalLexicon,
) -> Result<CrfModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("CRF training data"));
    }
    let keyed: Vec<Vec<Vec<String>>> = data
        .iter()
        .map(|ex| {
            if ex.tokens.len() != ex.tags.len() {
                return Err(Error::LengthMismatch {
                    left: ex.tokens.len(),
                    right: ex.tags.len(),
                });
            }
            check_len(ex.tokens.len())?;
            Ok(extract_features(&ex.tokens, ex.upos.as_deref(), lexicon))
        })
        .collect::<Result<_>>()?;
    let mut vocabulary: BTreeMap<String, usize> = keyed
        .iter()
        .flatten()
        .flatten()
        .map(|k| (k.clone(), 0))
        .collect();
    for (i, v) in vocabulary.values_mut().enumerate() {
        *v = i;
    }
    let mut model = CrfModel::new(role, lexicon.clone(), vocabulary);
    let compiled: Vec<Compiled> = keyed.iter().map(|k| model.compile(k)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = CrfWeights::zeros(model.weights.n_features());
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr / (1.0 + cfg.lr_decay * epoch as f64);
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.for_each_mut(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += nll_and_gradient(
                    &model.weights,
                    &compiled[i],
                    &data[i].tags,
                    scale,
                    &mut grad,
                )?;
            }
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
            let lambda = cfg.l2_lambda;
            for i in 0..grad.n_params() {
                let wi = model.weights.param(i);
                *model.weights.param_mut(i) -= lr * (grad.param(i) + lambda * wi);
            }
            if !model.weights.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
        }
    }
    Ok(model)
}
