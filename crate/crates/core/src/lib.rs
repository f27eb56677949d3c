//! Counterfactual statement detection and antecedent/consequent extraction.
//!
//! The crate is organised as a pipeline of small, independently testable
//! pieces:
//!
//! * [`corpus`] loads the task CSVs, CoNLL-U parses and embedding tables and
//!   produces seeded train/validation splits.
//! * [`text`] tokenizes with character offsets and converts between BIO tags
//!   and character spans.
//! * [`forms`] buckets sentences into if-modal / modal-if / wish / other.
//! * [`features`], [`balance`], [`linear`] and [`cnn`] make up the sentence
//!   classifiers; [`ensemble`] combines their votes.
//! * [`spans`] holds the linear-chain CRF tagger and the dependency-tree
//!   antecedent rule.
//! * [`eval`] computes the classification and span metrics.

pub mod artifact;
pub mod balance;
pub mod cnn;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod forms;
pub mod linear;
pub mod pipeline;
pub mod spans;
pub mod stopwords;
pub mod text;

pub use error::{Error, Result};
