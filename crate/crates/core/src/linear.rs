//! Class-weighted linear classifiers (hinge or logistic loss) trained by
//! stochastic subgradient descent on the regularized objective
//!
//! ```text
//! (λ/2)‖w‖² + (1/N) Σ c(yᵢ) · loss(yᵢ (w·xᵢ + b)),   λ = 1 / (C·N)
//! ```
//!
//! where `N = Σ c(yᵢ)` (the example count when class weights are the usual
//! `N/(2·count)` normalization). The bias is unregularized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::ClassWeights;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{LabeledVector, SparseFeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

impl LossKind {
    /// Loss at margin `m = y·score`.
    pub fn value(self, margin: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - margin).max(0.0),
            LossKind::Logistic => softplus(-margin),
        }
    }

    /// Negative (sub)derivative of the loss with respect to the margin.
    fn neg_slope(self, margin: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if margin < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Logistic => sigmoid(-margin),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            _ => Err(Error::InvalidConfig(format!("unknown loss {s:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        })
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: LossKind,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &SparseFeatureVector) -> Result<f64> {
        if x.min_dim() > self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.min_dim(),
            });
        }
        Ok(x.dot(&self.weights) + self.bias)
    }
}

/// `(label, score)` with `score = w·x + b`; positive iff `score ≥ 0`.
pub fn predict_linear(model: &LinearModel, x: &SparseFeatureVector) -> Result<(Label, f64)> {
    let score = model.score(x)?;
    Ok((Label::from_bool(score >= 0.0), score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrainConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub class_weights: Option<ClassWeights>,
    pub loss: LossKind,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 20,
            seed: 0,
            class_weights: None,
            loss: LossKind::Hinge,
        }
    }
}

impl LinearTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if let Some(w) = self.class_weights {
            if !(w.negative > 0.0 && w.positive > 0.0) {
                return Err(Error::InvalidConfig(
                    "class weights must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn weight(&self, label: Label) -> f64 {
        self.class_weights.map_or(1.0, |w| w.get(label))
    }

    /// `λ = 1 / (C · Σ c(yᵢ))`.
    pub fn lambda(&self, data: &[LabeledVector]) -> f64 {
        1.0 / (self.c * self.effective_size(data))
    }

    fn effective_size(&self, data: &[LabeledVector]) -> f64 {
        data.iter().map(|d| self.weight(d.label)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTrainReport {
    pub lambda: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Regularized, class-weighted objective of `(weights, bias)` on `data`.
pub fn objective(
    weights: &[f64],
    bias: f64,
    data: &[LabeledVector],
    cfg: &LinearTrainConfig,
) -> f64 {
    let lambda = cfg.lambda(data);
    let reg = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let total: f64 = data
        .iter()
        .map(|d| {
            let margin = d.label.sign() * (d.x.dot(weights) + bias);
            cfg.weight(d.label) * cfg.loss.value(margin)
        })
        .sum();
    reg + total / cfg.effective_size(data)
}

fn check_data(data: &[LabeledVector], n_features: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training examples"));
    }
    let pos = data.iter().filter(|d| d.label.is_positive()).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::SingleClass("linear training"));
    }
    for d in data {
        if d.x.min_dim() > n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: d.x.min_dim(),
            });
        }
        if !d.x.is_finite() {
            return Err(Error::NonFinite("feature value".into()));
        }
    }
    Ok(())
}

/// Trains with the step size `η_t = 1 / (λ (t + t₀))`, `t₀ = N`, visiting the
/// examples in a fresh seeded permutation each epoch. `w` is stored as
/// `scale · v` so the per-step shrink is O(1).
pub fn train_linear(
    data: &[LabeledVector],
    n_features: usize,
    cfg: &LinearTrainConfig,
) -> Result<(LinearModel, LinearTrainReport)> {
    cfg.validate()?;
    check_data(data, n_features)?;
    let lambda = cfg.lambda(data);
    let t0 = data.len() as f64;
    let initial_objective = objective(&vec![0.0; n_features], 0.0, data, cfg);

    let mut v = vec![0.0; n_features];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let d = &data[i];
            let eta = 1.0 / (lambda * (t as f64 + t0));
            let y = d.label.sign();
            let margin = y * (scale * d.x.dot(&v) + bias);
            scale *= 1.0 - eta * lambda;
            let g = cfg.weight(d.label) * cfg.loss.neg_slope(margin);
            if g != 0.0 {
                let step = eta * g * y;
                for &(j, xj) in d.x.entries() {
                    v[j] += step / scale * xj;
                }
                bias += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
    }
    let weights: Vec<f64> = v.iter().map(|x| x * scale).collect();
    if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("trained weights".into()));
    }
    let final_objective = objective(&weights, bias, data, cfg);
    Ok((
        LinearModel {
            weights,
            bias,
            loss: cfg.loss,
        },
        LinearTrainReport {
            lambda,
            initial_objective,
            final_objective,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(values: &[f64], positive: bool) -> LabeledVector {
        LabeledVector {
            x: SparseFeatureVector::from_dense(values),
            label: Label::from_bool(positive),
        }
    }

    fn toy() -> Vec<LabeledVector> {
        vec![
            lv(&[2.0, 1.0], true),
            lv(&[1.5, 2.0], true),
            lv(&[-1.0, -1.5], false),
            lv(&[-2.0, -0.5], false),
        ]
    }

    #[test]
    fn separable_toy_is_fit() {
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            let cfg = LinearTrainConfig {
                loss,
                ..Default::default()
            };
            let (model, report) = train_linear(&toy(), 2, &cfg).unwrap();
            for d in toy() {
                assert_eq!(predict_linear(&model, &d.x).unwrap().0, d.label);
            }
            assert!(report.final_objective <= report.initial_objective);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = LinearTrainConfig {
            seed: 11,
            ..Default::default()
        };
        let a = train_linear(&toy(), 2, &cfg).unwrap().0;
        let b = train_linear(&toy(), 2, &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_objective_matches_duplication() {
        let data = toy();
        let mut dup = data.clone();
        dup.extend(data.iter().filter(|d| d.label.is_positive()).cloned());
        let (w, b) = ([0.3, -0.7], 0.25);
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            let weighted = LinearTrainConfig {
                class_weights: Some(ClassWeights {
                    negative: 1.0,
                    positive: 2.0,
                }),
                loss,
                ..Default::default()
            };
            let plain = LinearTrainConfig {
                loss,
                ..Default::default()
            };
            let lhs = objective(&w, b, &data, &weighted);
            let rhs = objective(&w, b, &dup, &plain);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    fn noisy() -> Vec<LabeledVector> {
        (0..40)
            .map(|i| {
                let t = i as f64 / 40.0;
                let positive = i % 3 == 0 || i == 7;
                lv(
                    &[t, (i % 5) as f64 / 5.0, if positive { 0.8 } else { 0.1 }],
                    positive,
                )
            })
            .collect()
    }

    #[test]
    fn objective_decreases_on_average() {
        let data = noisy();
        let (mut init, mut fin) = (0.0, 0.0);
        for seed in 0..5 {
            let cfg = LinearTrainConfig {
                seed,
                ..Default::default()
            };
            let (_, r) = train_linear(&data, 3, &cfg).unwrap();
            init += r.initial_objective;
            fin += r.final_objective;
        }
        assert!(fin <= init, "{fin} > {init}");
    }

    #[test]
    fn feature_scaling_with_rescaled_lambda_keeps_predictions() {
        let data = noisy();
        let base = LinearTrainConfig {
            seed: 2,
            epochs: 50,
            ..Default::default()
        };
        let (model, _) = train_linear(&data, 3, &base).unwrap();
        let expect: Vec<Label> = data
            .iter()
            .map(|d| predict_linear(&model, &d.x).unwrap().0)
            .collect();
        for c in [0.5, 3.0] {
            let scaled: Vec<LabeledVector> = data
                .iter()
                .map(|d| LabeledVector {
                    x: d.x.scaled(c),
                    label: d.label,
                })
                .collect();
            // λ' = c²·λ, i.e. C' = C / c²
            let cfg = LinearTrainConfig {
                c: base.c / (c * c),
                ..base.clone()
            };
            assert!((cfg.lambda(&scaled) - c * c * base.lambda(&data)).abs() < 1e-12);
            let (m, _) = train_linear(&scaled, 3, &cfg).unwrap();
            let got: Vec<Label> = scaled
                .iter()
                .map(|d| predict_linear(&m, &d.x).unwrap().0)
                .collect();
            assert_eq!(got, expect, "c = {c}");
        }
    }

    #[test]
    fn prediction_conventions() {
        let zero = LinearModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            loss: LossKind::Hinge,
        };
        assert_eq!(
            predict_linear(&zero, &SparseFeatureVector::default()).unwrap(),
            (Label::Positive, 0.0)
        );
        let m = LinearModel {
            weights: vec![1.0, 0.0],
            bias: -0.5,
            loss: LossKind::Hinge,
        };
        let x = SparseFeatureVector::from_sorted(vec![(0, 1.0)]);
        assert_eq!(predict_linear(&m, &x).unwrap(), (Label::Positive, 0.5));
        let neg = LinearModel {
            weights: vec![-1.0, 0.0],
            bias: 0.5,
            ..m.clone()
        };
        assert_eq!(predict_linear(&neg, &x).unwrap(), (Label::Negative, -0.5));
        let wide = SparseFeatureVector::from_sorted(vec![(5, 1.0)]);
        assert!(matches!(
            predict_linear(&m, &wide),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn contract_errors() {
        let cfg = LinearTrainConfig::default();
        assert!(matches!(
            train_linear(&[], 2, &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            train_linear(&toy(), 1, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        let nan = vec![lv(&[f64::NAN], true), lv(&[1.0], false)];
        assert!(matches!(
            train_linear(&nan, 1, &cfg),
            Err(Error::NonFinite(_))
        ));
        let one_class = vec![lv(&[1.0], true), lv(&[2.0], true)];
        assert!(matches!(
            train_linear(&one_class, 1, &cfg),
            Err(Error::SingleClass(_))
        ));
        let zero_epochs = LinearTrainConfig { epochs: 0, ..cfg };
        assert!(train_linear(&toy(), 2, &zero_epochs).is_err());
    }

    #[test]
    fn loss_values() {
        assert_eq!(LossKind::Hinge.value(2.0), 0.0);
        assert_eq!(LossKind::Hinge.value(0.0), 1.0);
        assert!((LossKind::Logistic.value(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(LossKind::Logistic.value(-800.0).is_finite());
    }
}
