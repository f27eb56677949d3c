//! Word and POS n-gram vectorizers with per-(channel, n) top-K selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::corpus::{Label, Labeled};
use crate::error::{Error, Result};
use crate::stopwords::is_stopword;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Word,
    Pos,
}

impl Channel {
    fn prefix(self) -> char {
        match self {
            Channel::Word => 'w',
            Channel::Pos => 'p',
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Channel::Word),
            "pos" => Ok(Channel::Pos),
            _ => Err(Error::InvalidConfig(format!("unknown channel {s:?}"))),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Word => "word",
            Channel::Pos => "pos",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Binary,
    Count,
    Tfidf,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Weighting::Binary),
            "count" => Ok(Weighting::Count),
            "tfidf" => Ok(Weighting::Tfidf),
            _ => Err(Error::InvalidConfig(format!("unknown weighting {s:?}"))),
        }
    }
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Binary => "binary",
            Weighting::Count => "count",
            Weighting::Tfidf => "tfidf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub channels: Vec<Channel>,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Cap applied separately to every (channel, n) pair.
    pub top_k: usize,
    pub weighting: Weighting,
    pub keep_stopwords: bool,
    pub lowercase: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            channels: vec![Channel::Word],
            ngram_min: 1,
            ngram_max: 3,
            top_k: 1000,
            weighting: Weighting::Binary,
            keep_stopwords: true,
            lowercase: true,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.channels.is_empty() {
            return bad("at least one feature channel is required".into());
        }
        if !(1 <= self.ngram_min && self.ngram_min <= self.ngram_max && self.ngram_max <= 3) {
            return bad(format!(
                "n-gram range {}..={} must satisfy 1 ≤ min ≤ max ≤ 3",
                self.ngram_min, self.ngram_max
            ));
        }
        if self.top_k == 0 {
            return bad("top_k must be positive".into());
        }
        Ok(())
    }

    fn groups(&self) -> Vec<(Channel, usize)> {
        let channels: BTreeSet<Channel> = self.channels.iter().copied().collect();
        channels
            .into_iter()
            .flat_map(|c| (self.ngram_min..=self.ngram_max).map(move |n| (c, n)))
            .collect()
    }

    pub fn uses_pos(&self) -> bool {
        self.channels.contains(&Channel::Pos)
    }
}

/// A tokenized example, optionally with one UPOS tag per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub upos: Option<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, upos: Option<Vec<String>>) -> Self {
        Self {
            id: id.into(),
            tokens,
            upos,
        }
    }

    /// Tokenizes `text` with [`crate::text::tokenize`].
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        let tokens = crate::text::tokenize(text)
            .into_iter()
            .map(|t| t.surface)
            .collect();
        Self::new(id, tokens, None)
    }
}

/// Distinct or repeated n-gram keys of one (channel, n) group.
fn grams(
    doc: &Document,
    channel: Channel,
    n: usize,
    cfg: &VectorizerConfig,
) -> Result<Vec<String>> {
    let units: Vec<String> = match channel {
        Channel::Word => doc
            .tokens
            .iter()
            .filter(|t| cfg.keep_stopwords || !is_stopword(t))
            .map(|t| {
                if cfg.lowercase {
                    t.to_lowercase()
                } else {
                    t.clone()
                }
            })
            .collect(),
        Channel::Pos => match &doc.upos {
            Some(tags) if tags.len() == doc.tokens.len() => tags.clone(),
            _ => return Err(Error::MissingPos { id: doc.id.clone() }),
        },
    };
    if units.len() < n {
        return Ok(Vec::new());
    }
    Ok(units
        .windows(n)
        .map(|w| format!("{}{}:{}", channel.prefix(), n, w.join(" ")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedVectorizer {
    pub config: VectorizerConfig,
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Option<Vec<f64>>,
    pub n_features: usize,
}

impl Artifact for FittedVectorizer {
    const FORMAT: &'static str = "cfx-vectorizer";
    const VERSION: u32 = 1;
}

/// Keeps the `top_k` n-grams of each group by document frequency
/// (ties lexicographic). With TF-IDF weighting, `idf = ln((1+N)/(1+df)) + 1`.
pub fn fit_vectorizer(corpus: &[Document], cfg: &VectorizerConfig) -> Result<FittedVectorizer> {
    cfg.validate()?;
    let mut vocabulary = BTreeMap::new();
    let mut dfs = Vec::new();
    for (channel, n) in cfg.groups() {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            let distinct: BTreeSet<String> = grams(doc, channel, n, cfg)?.into_iter().collect();
            for g in distinct {
                *df.entry(g).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (key, count) in ranked.into_iter().take(cfg.top_k) {
            vocabulary.insert(key, dfs.len());
            dfs.push(count);
        }
    }
    let total = corpus.len() as f64;
    let idf = (cfg.weighting == Weighting::Tfidf).then(|| {
        dfs.iter()
            .map(|&df| ((1.0 + total) / (1.0 + df as f64)).ln() + 1.0)
            .collect()
    });
    Ok(FittedVectorizer {
        config: cfg.clone(),
        n_features: dfs.len(),
        vocabulary,
        idf,
    })
}

impl FittedVectorizer {
    pub fn transform(&self, doc: &Document) -> Result<SparseFeatureVector> {
        vectorize(doc, self)
    }

    pub fn transform_all(&self, docs: &[Document]) -> Result<Vec<SparseFeatureVector>> {
        docs.iter().map(|d| vectorize(d, self)).collect()
    }
}

pub fn vectorize(doc: &Document, v: &FittedVectorizer) -> Result<SparseFeatureVector> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for (channel, n) in v.config.groups() {
        for g in grams(doc, channel, n, &v.config)? {
            if let Some(&col) = v.vocabulary.get(&g) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
    match v.config.weighting {
        Weighting::Binary => entries.iter_mut().for_each(|e| e.1 = 1.0),
        Weighting::Count => {}
        Weighting::Tfidf => {
            let idf = v
                .idf
                .as_ref()
                .ok_or_else(|| Error::Format("tf-idf vectorizer without idf".into()))?;
            entries.iter_mut().for_each(|e| e.1 *= idf[e.0]);
            let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                entries.iter_mut().for_each(|e| e.1 /= norm);
            }
        }
    }
    Ok(SparseFeatureVector::from_sorted(entries))
}

/// Sorted `(column, value)` pairs with no stored zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseFeatureVector {
    entries: Vec<(usize, f64)>,
}

impl SparseFeatureVector {
    /// Builds from entries already sorted by strictly increasing column.
    pub fn from_sorted(mut entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        entries.retain(|e| e.1 != 0.0);
        Self { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_sorted(values.iter().copied().enumerate().collect())
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest stored column (0 when empty).
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0 + 1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_sorted(self.entries.iter().map(|&(i, v)| (i, v * c)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }

    /// Merge-walks the union of columns, calling `f(col, a, b)`.
    fn merge(&self, other: &Self, mut f: impl FnMut(usize, f64, f64)) {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(ci, vi)), Some(&(cj, vj))) if ci == cj => {
                    f(ci, vi, vj);
                    i += 1;
                    j += 1;
                }
                (Some(&(ci, vi)), Some(&(cj, _))) if ci < cj => {
                    f(ci, vi, 0.0);
                    i += 1;
                }
                (Some(&(ci, vi)), None) => {
                    f(ci, vi, 0.0);
                    i += 1;
                }
                (_, Some(&(cj, vj))) => {
                    f(cj, 0.0, vj);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        let mut d = 0.0;
        self.merge(other, |_, a, b| d += (a - b) * (a - b));
        d
    }

    /// `self + u · (other − self)`.
    pub fn lerp(&self, other: &Self, u: f64) -> Self {
        let mut out = Vec::with_capacity(self.nnz().max(other.nnz()));
        self.merge(other, |c, a, b| out.push((c, a + u * (b - a))));
        Self::from_sorted(out)
    }
}

/// A feature vector with its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub x: SparseFeatureVector,
    pub label: Label,
}

impl Labeled for LabeledVector {
    fn label(&self) -> Label {
        self.label
    }
}
