//! End-to-end sentence classifiers: vectorizer + balancing + model bundled
//! into self-contained artifacts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::balance::{class_weights, oversample, smote, undersample, BalanceStrategy};
use crate::cnn::{
    predict_cnn, train_cnn, CnnConfig, CnnExample, CnnModel, EpochStats, OptimizerConfig,
};
use crate::corpus::{EmbeddingTable, Label, LabeledSentence, ParsedSentence};
use crate::error::{Error, Result};
use crate::features::{
    fit_vectorizer, Document, FittedVectorizer, LabeledVector, VectorizerConfig,
};
use crate::forms::{classify_surfaces, FormLabel, ModalLexicon};
use crate::linear::{predict_linear, train_linear, LinearModel, LinearTrainConfig};

/// Tokens and UPOS from the parse when one exists for the sentence id,
/// otherwise whitespace/punctuation tokens without POS.
pub fn document(
    sentence: &LabeledSentence,
    parses: Option<&BTreeMap<String, ParsedSentence>>,
) -> Document {
    document_for(&sentence.id, &sentence.text, parses)
}

pub fn document_for(
    id: &str,
    text: &str,
    parses: Option<&BTreeMap<String, ParsedSentence>>,
) -> Document {
    match parses.and_then(|p| p.get(id)) {
        Some(p) => Document::new(
            id,
            p.tokens.iter().map(|t| t.surface.clone()).collect(),
            Some(p.upos()),
        ),
        None => Document::from_text(id, text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSettings {
    pub vectorizer: VectorizerConfig,
    pub train: LinearTrainConfig,
    pub balance: BalanceStrategy,
    pub smote_k: usize,
}

impl Default for LinearSettings {
    /// Word 1–3 grams, stop words kept, hinge loss, C = 1, class-weighted.
    fn default() -> Self {
        Self {
            vectorizer: VectorizerConfig::default(),
            train: LinearTrainConfig::default(),
            balance: BalanceStrategy::Weights,
            smote_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPipeline {
    pub settings: LinearSettings,
    pub vectorizer: FittedVectorizer,
    pub model: LinearModel,
}

impl Artifact for LinearPipeline {
    const FORMAT: &'static str = "cfx-linear";
    const VERSION: u32 = 1;
}

fn check_aligned(docs: &[Document], labels: &[Label]) -> Result<()> {
    if docs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: docs.len(),
            right: labels.len(),
        });
    }
    if docs.is_empty() {
        return Err(Error::EmptyInput("no training documents"));
    }
    Ok(())
}

pub fn train_linear_pipeline(
    docs: &[Document],
    labels: &[Label],
    settings: &LinearSettings,
) -> Result<LinearPipeline> {
    check_aligned(docs, labels)?;
    let vectorizer = fit_vectorizer(docs, &settings.vectorizer)?;
    let data: Vec<LabeledVector> = vectorizer
        .transform_all(docs)?
        .into_iter()
        .zip(labels)
        .map(|(x, &label)| LabeledVector { x, label })
        .collect();
    let mut cfg = settings.train.clone();
    let seed = cfg.seed;
    let data = match settings.balance {
        BalanceStrategy::None => data,
        BalanceStrategy::Weights => {
            cfg.class_weights = Some(class_weights(&data)?);
            data
        }
        BalanceStrategy::Oversample => oversample(&data, seed)?,
        BalanceStrategy::Undersample => undersample(&data, seed)?,
        BalanceStrategy::Smote => smote(&data, settings.smote_k, seed)?,
    };
    let (model, _) = train_linear(&data, vectorizer.n_features, &cfg)?;
    Ok(LinearPipeline {
        settings: LinearSettings {
            train: cfg,
            ..settings.clone()
        },
        vectorizer,
        model,
    })
}

impl LinearPipeline {
    pub fn predict(&self, doc: &Document) -> Result<Label> {
        Ok(predict_linear(&self.model, &self.vectorizer.transform(doc)?)?.0)
    }

    pub fn predict_all(&self, docs: &[Document]) -> Result<Vec<Label>> {
        docs.iter().map(|d| self.predict(d)).collect()
    }
}

/// What a form bucket predicts with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormModel {
    Linear(Box<LinearPipeline>),
    /// Used when the training bucket was empty or single-class.
    Constant(Label),
}

/// One linear classifier per grammatical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFormPipeline {
    pub lexicon: ModalLexicon,
    pub models: BTreeMap<FormLabel, FormModel>,
}

impl Artifact for PerFormPipeline {
    const FORMAT: &'static str = "cfx-per-form";
    const VERSION: u32 = 1;
}

pub fn form_of(doc: &Document, lexicon: &ModalLexicon) -> FormLabel {
    classify_surfaces(&doc.tokens, lexicon)
}

pub fn train_per_form(
    docs: &[Document],
    labels: &[Label],
    settings: &LinearSettings,
    lexicon: &ModalLexicon,
) -> Result<PerFormPipeline> {
    check_aligned(docs, labels)?;
    let mut buckets: BTreeMap<FormLabel, (Vec<Document>, Vec<Label>)> = FormLabel::ALL
        .into_iter()
        .map(|f| (f, Default::default()))
        .collect();
    for (d, &l) in docs.iter().zip(labels) {
        let b = buckets
            .get_mut(&form_of(d, lexicon))
            .expect("all forms present");
        b.0.push(d.clone());
        b.1.push(l);
    }
    let mut models = BTreeMap::new();
    for (form, (docs, labels)) in buckets {
        let positives = labels.iter().filter(|l| l.is_positive()).count();
        let model = if positives == 0 {
            FormModel::Constant(Label::Negative)
        } else if positives == labels.len() {
            FormModel::Constant(Label::Positive)
        } else {
            FormModel::Linear(Box::new(train_linear_pipeline(&docs, &labels, settings)?))
        };
        models.insert(form, model);
    }
    Ok(PerFormPipeline {
        lexicon: lexicon.clone(),
        models,
    })
}

impl PerFormPipeline {
    pub fn predict(&self, doc: &Document) -> Result<Label> {
        let form = form_of(doc, &self.lexicon);
        match self.models.get(&form) {
            Some(FormModel::Linear(p)) => p.predict(doc),
            Some(FormModel::Constant(l)) => Ok(*l),
            None => Err(Error::Format(format!(
                "per-form model has no entry for {form}"
            ))),
        }
    }

    pub fn predict_all(&self, docs: &[Document]) -> Result<Vec<Label>> {
        docs.iter().map(|d| self.predict(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSettings {
    pub optimizer: OptimizerConfig,
    pub balance: BalanceStrategy,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            balance: BalanceStrategy::Weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnPipeline {
    pub settings: CnnSettings,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochStats>,
    pub model: CnnModel,
}

impl Artifact for CnnPipeline {
    const FORMAT: &'static str = "cfx-cnn";
    const VERSION: u32 = 1;
}

fn cnn_examples(docs: &[Document], labels: &[Label]) -> Vec<CnnExample> {
    docs.iter()
        .zip(labels)
        .map(|(d, &label)| CnnExample {
            tokens: d.tokens.clone(),
            label,
        })
        .collect()
}

pub fn train_cnn_pipeline(
    train: (&[Document], &[Label]),
    val: (&[Document], &[Label]),
    table: &EmbeddingTable,
    cnn: &CnnConfig,
    settings: &CnnSettings,
) -> Result<CnnPipeline> {
    check_aligned(train.0, train.1)?;
    check_aligned(val.0, val.1)?;
    let examples = cnn_examples(train.0, train.1);
    let seed = settings.optimizer.seed;
    let (examples, weights) = match settings.balance {
        BalanceStrategy::None => (examples, None),
        BalanceStrategy::Weights => {
            let w = class_weights(&examples)?;
            (examples, Some(w))
        }
        BalanceStrategy::Oversample => (oversample(&examples, seed)?, None),
        BalanceStrategy::Undersample => (undersample(&examples, seed)?, None),
        BalanceStrategy::Smote => {
            return Err(Error::InvalidConfig(
                "SMOTE applies to sparse feature vectors, not the CNN".into(),
            ))
        }
    };
    let out = train_cnn(
        &examples,
        &cnn_examples(val.0, val.1),
        table,
        cnn,
        &settings.optimizer,
        weights,
    )?;
    Ok(CnnPipeline {
        settings: settings.clone(),
        best_epoch: out.best_epoch,
        best_val_f1: out.best_val_f1,
        history: out.history,
        model: out.model,
    })
}

impl CnnPipeline {
    pub fn predict(&self, doc: &Document, table: &EmbeddingTable) -> Result<Label> {
        Ok(predict_cnn(&self.model, &doc.tokens, table)?.0)
    }

    pub fn predict_all(&self, docs: &[Document], table: &EmbeddingTable) -> Result<Vec<Label>> {
        docs.iter().map(|d| self.predict(d, table)).collect()
    }
}
