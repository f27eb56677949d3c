//! Class-imbalance remedies: inverse-proportion weights, random over- and
//! undersampling, and SMOTE.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Labeled};
use crate::error::{Error, Result};
use crate::features::LabeledVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceStrategy {
    None,
    Oversample,
    Undersample,
    Smote,
    Weights,
}

impl std::str::FromStr for BalanceStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "oversample" => Self::Oversample,
            "undersample" => Self::Undersample,
            "smote" => Self::Smote,
            "weights" => Self::Weights,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown balance strategy {s:?}"
                )))
            }
        })
    }
}

impl std::fmt::Display for BalanceStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Oversample => "oversample",
            Self::Undersample => "undersample",
            Self::Smote => "smote",
            Self::Weights => "weights",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self {
            negative: 1.0,
            positive: 1.0,
        }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Negative => self.negative,
            Label::Positive => self.positive,
        }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

fn counts<T: Labeled>(data: &[T]) -> (usize, usize) {
    let pos = data.iter().filter(|d| d.label().is_positive()).count();
    (data.len() - pos, pos)
}

/// `weight(c) = N / (2 · count(c))`, so a balanced set gets weight 1 for both.
pub fn class_weights<T: Labeled>(labels: &[T]) -> Result<ClassWeights> {
    let (neg, pos) = counts(labels);
    if neg == 0 || pos == 0 {
        return Err(Error::SingleClass("class weights"));
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        negative: n / (2.0 * neg as f64),
        positive: n / (2.0 * pos as f64),
    })
}

/// Minority label and the indices of each class, in input order.
fn split_classes<T: Labeled>(data: &[T]) -> Result<(Label, Vec<usize>, Vec<usize>)> {
    let (neg, pos): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| !data[i].label().is_positive());
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass("resampling"));
    }
    Ok(if pos.len() <= neg.len() {
        (Label::Positive, pos, neg)
    } else {
        (Label::Negative, neg, pos)
    })
}

/// Appends minority copies drawn uniformly with replacement until the classes
/// are equal. The input rows come first, unchanged.
pub fn oversample<T: Labeled + Clone>(data: &[T], seed: u64) -> Result<Vec<T>> {
    let (_, minority, majority) = split_classes(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.to_vec();
    for _ in minority.len()..majority.len() {
        out.push(data[*minority.choose(&mut rng).expect("non-empty")].clone());
    }
    Ok(out)
}

/// Keeps a uniform sample (without replacement) of the majority class the
/// size of the minority class. Input order is preserved.
pub fn undersample<T: Labeled + Clone>(data: &[T], seed: u64) -> Result<Vec<T>> {
    let (_, minority, majority) = split_classes(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: BTreeSet<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|k| majority[k])
        .chain(minority.iter().copied())
        .collect();
    Ok(keep.into_iter().map(|i| data[i].clone()).collect())
}

/// Indices of the `k` nearest minority neighbours of every minority point
/// (Euclidean, ties by position).
pub fn minority_neighbours(points: &[&LabeledVector], k: usize) -> Vec<Vec<usize>> {
    let m = points.len();
    let mut dist = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = points[i].x.squared_distance(&points[j].x);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    (0..m)
        .map(|i| {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

/// SMOTE: synthetic minority points `x + u·(x_nn − x)` with `u ~ U(0,1)` and
/// `x_nn` one of the `k` nearest minority neighbours of `x` (k capped at
/// minority − 1). Synthetic rows are appended after the input.
pub fn smote(data: &[LabeledVector], k: usize, seed: u64) -> Result<Vec<LabeledVector>> {
    if k == 0 {
        return Err(Error::InvalidConfig("SMOTE k must be at least 1".into()));
    }
    let (label, minority, majority) = split_classes(data)?;
    if minority.len() < 2 {
        return Err(Error::TooFewMinority);
    }
    let points: Vec<&LabeledVector> = minority.iter().map(|&i| &data[i]).collect();
    let neighbours = minority_neighbours(&points, k.min(points.len() - 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.to_vec();
    for _ in minority.len()..majority.len() {
        let base = rng.gen_range(0..points.len());
        let nn = *neighbours[base].choose(&mut rng).expect("k ≥ 1");
        let u: f64 = rng.gen();
        out.push(LabeledVector {
            x: points[base].x.lerp(&points[nn].x, u),
            label,
        });
    }
    Ok(out)
}
