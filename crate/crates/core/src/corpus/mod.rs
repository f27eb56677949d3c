//! Task data: labelled sentences, span annotations, dependency parses,
//! embedding tables, and deterministic train/validation splits.

mod conllu;
mod embeddings;
mod task_csv;

pub use conllu::{load_conllu, parse_conllu, ParsedSentence, ParsedToken};
pub use embeddings::{load_embeddings, load_embeddings_filtered, parse_embeddings, EmbeddingTable};
pub use task_csv::{
    has_column, load_label_predictions, load_sentences, load_span_predictions, load_task1_csv,
    load_task2_csv, read_sentences, read_task1_csv, read_task2_csv, write_label_predictions,
    write_span_predictions, write_task1_csv, write_task2_csv,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::CharRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// `+1.0` for positive, `-1.0` for negative.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn flip(self) -> Self {
        Label::from_bool(!self.is_positive())
    }
}

/// Anything carrying a binary class label.
pub trait Labeled {
    fn label(&self) -> Label;
}

impl Labeled for Label {
    fn label(&self) -> Label {
        *self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub label: Label,
}

impl Labeled for LabeledSentence {
    fn label(&self) -> Label {
        self.label
    }
}

/// Gold antecedent/consequent offsets for one counterfactual sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub id: String,
    pub text: String,
    pub antecedent: CharRange,
    pub consequent: Option<CharRange>,
}

/// Predicted spans; either role may be absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub id: String,
    pub text: String,
    pub antecedent: Option<CharRange>,
    pub consequent: Option<CharRange>,
}

impl From<&SpanAnnotation> for SpanPrediction {
    fn from(a: &SpanAnnotation) -> Self {
        SpanPrediction {
            id: a.id.clone(),
            text: a.text.clone(),
            antecedent: Some(a.antecedent),
            consequent: a.consequent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Train-side indices (ascending) for a split of `n` items.
///
/// When `labels` is given each class is shuffled and cut separately, so the
/// per-class proportion in the train side is within one example of the full set.
pub fn split_indices(n: usize, labels: Option<&[Label]>, cfg: &SplitConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("cannot split an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let groups: Vec<Vec<usize>> = match labels {
        Some(labels) => {
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| labels[i].is_positive());
            if pos.is_empty() || neg.is_empty() {
                return Err(Error::SingleClass(
                    "stratified split needs examples of both classes",
                ));
            }
            vec![neg, pos]
        }
        None => vec![(0..n).collect()],
    };
    let mut train = Vec::with_capacity(n);
    for mut group in groups {
        group.shuffle(&mut rng);
        let take = (cfg.train_fraction * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..take]);
    }
    train.sort_unstable();
    Ok(train)
}

fn partition_by_indices<T: Clone>(data: &[T], train_idx: &[usize]) -> (Vec<T>, Vec<T>) {
    let mut in_train = vec![false; data.len()];
    for &i in train_idx {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(train_idx.len());
    let mut val = Vec::with_capacity(data.len() - train_idx.len());
    for (item, &t) in data.iter().zip(&in_train) {
        if t {
            train.push(item.clone());
        } else {
            val.push(item.clone());
        }
    }
    (train, val)
}

/// Seeded train/validation split; both halves keep input order.
pub fn stratified_split(
    data: &[LabeledSentence],
    cfg: &SplitConfig,
) -> Result<(Vec<LabeledSentence>, Vec<LabeledSentence>)> {
    let labels: Vec<Label> = data.iter().map(|s| s.label).collect();
    let idx = split_indices(data.len(), cfg.stratified.then_some(&labels[..]), cfg)?;
    Ok(partition_by_indices(data, &idx))
}

/// Unstratified seeded split for unlabelled items such as span annotations.
pub fn random_split<T: Clone>(data: &[T], cfg: &SplitConfig) -> Result<(Vec<T>, Vec<T>)> {
    let idx = split_indices(data.len(), None, cfg)?;
    Ok(partition_by_indices(data, &idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pos: usize, neg: usize) -> Vec<LabeledSentence> {
        (0..pos + neg)
            .map(|i| LabeledSentence {
                id: i.to_string(),
                text: format!("sentence {i}"),
                label: Label::from_bool(i < pos),
            })
            .collect()
    }

    #[test]
    fn split_sizes_at_full_corpus_scale() {
        let data = corpus(1560, 11440);
        let cfg = SplitConfig {
            seed: 3,
            ..Default::default()
        };
        let (train, val) = stratified_split(&data, &cfg).unwrap();
        assert_eq!((train.len(), val.len()), (9750, 3250));
        assert_eq!(train.iter().filter(|s| s.label.is_positive()).count(), 1170);
    }

    #[test]
    fn split_is_deterministic() {
        let data = corpus(13, 40);
        let cfg = SplitConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(
            stratified_split(&data, &cfg).unwrap(),
            stratified_split(&data, &cfg).unwrap()
        );
    }

    #[test]
    fn symmetric_halves() {
        let data = corpus(4, 4);
        let cfg = SplitConfig {
            train_fraction: 0.5,
            seed: 1,
            stratified: true,
        };
        let (train, val) = stratified_split(&data, &cfg).unwrap();
        for half in [&train, &val] {
            assert_eq!(half.iter().filter(|s| s.label.is_positive()).count(), 2);
            assert_eq!(half.len(), 4);
        }
    }

    #[test]
    fn split_errors() {
        let cfg = SplitConfig::default();
        assert!(matches!(
            stratified_split(&[], &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            stratified_split(&corpus(0, 5), &cfg),
            Err(Error::SingleClass(_))
        ));
        let bad = SplitConfig {
            train_fraction: 1.0,
            ..cfg
        };
        assert!(matches!(
            stratified_split(&corpus(2, 2), &bad),
            Err(Error::InvalidConfig(_))
        ));
        let unstrat = SplitConfig {
            stratified: false,
            ..cfg
        };
        assert_eq!(
            stratified_split(&corpus(0, 8), &unstrat).unwrap().0.len(),
            6
        );
    }
}
