use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {required} frames, got {actual}")]
    InputTooShort { required: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large for exhaustive enumeration: {paths} paths exceeds limit {limit}")]
    TooLarge { paths: f64, limit: usize },

    #[error("utterance {id}: {message}")]
    Utterance { id: String, message: String },

    #[error("utterance {id}: expected {expected} labels, found {actual}")]
    LabelCount {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("utterance {id}: bad magic in {path}")]
    BadMagic { id: String, path: PathBuf },

    #[error("utterance {id}: missing file {path}")]
    MissingFile { id: String, path: PathBuf },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("non-finite value during training on utterance {id}: {what}")]
    NonFinite { id: String, what: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
