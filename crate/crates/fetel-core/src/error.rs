//! Error type shared by every module of the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed type path {raw:?}: {reason}")]
    MalformedTypePath { raw: String, reason: String },

    #[error("unknown type {0:?}")]
    UnknownType(String),

    #[error("unknown entity {0:?}")]
    UnknownEntity(String),

    #[error("surface string is empty after normalization")]
    EmptySurface,

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format version mismatch in {path}: {detail}")]
    FormatVersionMismatch { path: String, detail: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("schema violation at record {record}: {detail}")]
    SchemaViolation { record: usize, detail: String },

    #[error("mention span [{start}, {end}) out of range for {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("evaluation over an empty mention list")]
    EmptyEvaluation,
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
