//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown cell id `{0}`")]
    UnknownCell(String),

    #[error("duplicate cell id `{0}`")]
    DuplicateCell(String),

    #[error("attribute `{0}` is never observed on a training cell")]
    UnobservedAttribute(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cosine is undefined for a zero vector")]
    UndefinedCosine,

    #[error("masked softmax needs at least one unmasked entry")]
    AllMasked,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("K = {k} is out of range for a store of {size} records")]
    KOutOfRange { k: usize, size: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema hash mismatch: checkpoint has {expected}, network has {found}")]
    SchemaMismatch { expected: String, found: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
