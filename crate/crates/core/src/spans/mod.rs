//! Antecedent/consequent extraction: one CRF tagger per role, with the
//! dependency "if" rule taking over the antecedent when it fires.

pub mod crf;
pub mod heuristic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::corpus::{ParsedSentence, SpanAnnotation, SpanPrediction};
use crate::error::{Error, Result};
use crate::forms::ModalLexicon;
use crate::text::{bio_to_spans, spans_to_bio, tokenize, Role, Token};

pub use crf::{
    forward_backward, train_crf, viterbi, CrfExample, CrfModel, CrfTrainConfig, CrfWeights,
};
pub use heuristic::extract_if_antecedent;

/// Trained antecedent and consequent taggers plus the settings used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanModels {
    pub config: CrfTrainConfig,
    pub antecedent: CrfModel,
    pub consequent: CrfModel,
}

impl Artifact for SpanModels {
    const FORMAT: &'static str = "cfx-crf";
    const VERSION: u32 = 1;
}

/// Tokens (from the parse when given, else [`tokenize`]) and UPOS tags.
pub fn span_inputs(
    text: &str,
    parse: Option<&ParsedSentence>,
) -> (Vec<Token>, Option<Vec<String>>) {
    match parse {
        Some(p) => (p.text_tokens(), Some(p.upos())),
        None => (tokenize(text), None),
    }
}

fn role_examples(
    data: &[SpanAnnotation],
    parses: &BTreeMap<String, ParsedSentence>,
) -> (Vec<CrfExample>, Vec<CrfExample>) {
    let mut ant = Vec::with_capacity(data.len());
    let mut con = Vec::with_capacity(data.len());
    for a in data {
        let (tokens, upos) = span_inputs(&a.text, parses.get(&a.id));
        if tokens.is_empty() {
            continue;
        }
        let surfaces: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
        for (role, span, out) in [
            (Role::Antecedent, Some(a.antecedent), &mut ant),
            (Role::Consequent, a.consequent, &mut con),
        ] {
            out.push(CrfExample {
                tokens: surfaces.clone(),
                upos: upos.clone(),
                tags: spans_to_bio(&tokens, span, role).tags,
            });
        }
    }
    (ant, con)
}

/// Trains both role taggers. Sentences with a parse in `parses` use its
/// tokens and UPOS tags.
pub fn train_span_models(
    data: &[SpanAnnotation],
    parses: &BTreeMap<String, ParsedSentence>,
    cfg: &CrfTrainConfig,
    lexicon: &ModalLexicon,
) -> Result<SpanModels> {
    let (ant, con) = role_examples(data, parses);
    Ok(SpanModels {
        config: cfg.clone(),
        antecedent: train_crf(&ant, Role::Antecedent, cfg, lexicon)?,
        consequent: train_crf(&con, Role::Consequent, cfg, lexicon)?,
    })
}

/// Antecedent from the "if" rule when a parse is given and the rule fires,
/// otherwise from the antecedent CRF; consequent always from its CRF.
pub fn predict_spans(
    id: &str,
    text: &str,
    parse: Option<&ParsedSentence>,
    ant_model: &CrfModel,
    con_model: &CrfModel,
) -> Result<SpanPrediction> {
    if ant_model.role != Role::Antecedent || con_model.role != Role::Consequent {
        return Err(Error::InvalidConfig(
            "antecedent/consequent models passed in the wrong order".into(),
        ));
    }
    let (tokens, upos) = span_inputs(text, parse);
    let mut out = SpanPrediction {
        id: id.to_string(),
        text: text.to_string(),
        antecedent: None,
        consequent: None,
    };
    if tokens.is_empty() {
        return Ok(out);
    }
    let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    out.antecedent = match parse.map(extract_if_antecedent).transpose()?.flatten() {
        Some(span) => Some(span),
        None => bio_to_spans(&tokens, &ant_model.decode(&surfaces, upos.as_deref())?),
    };
    out.consequent = bio_to_spans(&tokens, &con_model.decode(&surfaces, upos.as_deref())?);
    Ok(out)
}

impl SpanModels {
    pub fn predict(
        &self,
        id: &str,
        text: &str,
        parse: Option<&ParsedSentence>,
    ) -> Result<SpanPrediction> {
        predict_spans(id, text, parse, &self.antecedent, &self.consequent)
    }
}
