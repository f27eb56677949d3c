//! Grammatical-form buckets used to train and analyse per-form classifiers.
//!
//! Forms are decided on token surfaces (case-insensitive), never on raw
//! substrings, so "iffy" or "wishbone" do not trigger.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::error::{io_err, Error, Result};
use crate::text::{tokenize, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormLabel {
    IfThenModal,
    ModalThenIf,
    Wish,
    Other,
}

impl FormLabel {
    pub const ALL: [FormLabel; 4] = [
        FormLabel::IfThenModal,
        FormLabel::ModalThenIf,
        FormLabel::Wish,
        FormLabel::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormLabel::IfThenModal => "if-modal",
            FormLabel::ModalThenIf => "modal-if",
            FormLabel::Wish => "wish",
            FormLabel::Other => "other",
        }
    }
}

impl std::fmt::Display for FormLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FormLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormLabel::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown form {s:?}")))
    }
}

const DEFAULT_MODALS: [&str; 12] = [
    "would",
    "could",
    "should",
    "might",
    "must",
    "ought",
    "'d",
    "wouldn't",
    "couldn't",
    "shouldn't",
    "mightn't",
    "mustn't",
];

/// Lowercase modal forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalLexicon {
    words: BTreeSet<String>,
}

impl Default for ModalLexicon {
    fn default() -> Self {
        Self {
            words: DEFAULT_MODALS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl ModalLexicon {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words.into_iter().map(|w| normalize(w.as_ref())).collect();
        if words.is_empty() {
            return Err(Error::InvalidConfig("modal lexicon is empty".into()));
        }
        Ok(Self { words })
    }

    /// One modal per line; blank lines and `#` comments are ignored.
    pub fn parse(input: &str) -> Result<Self> {
        Self::new(
            input
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&normalize(word))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

fn normalize(word: &str) -> String {
    word.to_lowercase().replace('\u{2019}', "'")
}

pub fn is_wish_word(word: &str) -> bool {
    matches!(word.to_lowercase().as_str(), "wish" | "wishes" | "wished")
}

pub fn is_if_word(word: &str) -> bool {
    word.eq_ignore_ascii_case("if")
}

/// Form of a sentence given its token surfaces.
pub fn classify_surfaces<S: AsRef<str>>(surfaces: &[S], lexicon: &ModalLexicon) -> FormLabel {
    let mut first_if = None;
    let mut last_if = None;
    let mut first_modal = None;
    let mut last_modal = None;
    let mut wish = false;
    for (i, s) in surfaces.iter().enumerate() {
        let s = s.as_ref();
        if is_if_word(s) {
            first_if.get_or_insert(i);
            last_if = Some(i);
        }
        if lexicon.contains(s) {
            first_modal.get_or_insert(i);
            last_modal = Some(i);
        }
        wish |= is_wish_word(s);
    }
    let precedes =
        |a: Option<usize>, b: Option<usize>| matches!((a, b), (Some(a), Some(b)) if a < b);
    if precedes(first_if, last_modal) {
        FormLabel::IfThenModal
    } else if precedes(first_modal, last_if) {
        FormLabel::ModalThenIf
    } else if wish {
        FormLabel::Wish
    } else {
        FormLabel::Other
    }
}

pub fn classify_form(tokens: &[Token], lexicon: &ModalLexicon) -> FormLabel {
    let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    classify_surfaces(&surfaces, lexicon)
}

pub fn classify_text(text: &str, lexicon: &ModalLexicon) -> FormLabel {
    classify_form(&tokenize(text), lexicon)
}

/// Buckets every sentence by form; all four buckets are always present.
pub fn partition_by_form(
    data: &[LabeledSentence],
    lexicon: &ModalLexicon,
) -> BTreeMap<FormLabel, Vec<LabeledSentence>> {
    let mut buckets: BTreeMap<FormLabel, Vec<LabeledSentence>> = FormLabel::ALL
        .into_iter()
        .map(|f| (f, Vec::new()))
        .collect();
    for s in data {
        buckets
            .get_mut(&classify_text(&s.text, lexicon))
            .expect("all forms present")
            .push(s.clone());
    }
    buckets
}
