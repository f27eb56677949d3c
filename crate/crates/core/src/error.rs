use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("invalid label at line {line}")]
    InvalidLabel { line: u64 },

    #[error("duplicate sentence id {id:?}")]
    DuplicateId { id: String },

    #[error("span out of range at line {line}: {message}")]
    SpanOutOfRange { line: u64, message: String },

    #[error("CoNLL-U line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("sentence {id:?}: token {token:?} could not be aligned to the raw text")]
    Alignment { id: String, token: String },

    #[error("CoNLL-U sent_id {id:?} has no matching raw text")]
    UnknownSentId { id: String },

    #[error("embedding line {line}: {message}")]
    Embedding { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("both classes must be present: {0}")]
    SingleClass(&'static str),

    #[error("example {id:?} has no UPOS tags but the pos channel was requested")]
    MissingPos { id: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("SMOTE needs ≥2 minority samples")]
    TooFewMinority,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("malformed dependency tree: {0}")]
    MalformedTree(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("id mismatch at position {index}: {gold:?} vs {pred:?}")]
    IdMismatch {
        index: usize,
        gold: String,
        pred: String,
    },

    #[error("artifact format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
