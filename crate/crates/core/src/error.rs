use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("{path}:{line}: {message}")]
    Csv { path: PathBuf, line: u64, message: String },

    #[error("{path}:{line}: malformed record: {message}")]
    Record { path: PathBuf, line: u64, message: String },

    #[error("column `{0}` has no non-missing values")]
    AllMissingColumn(String),

    #[error("at least two classes are required, found {0}")]
    SingleClass(usize),

    #[error("not enough samples: need {needed}, have {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("architecture mismatch between parameter vectors")]
    ArchitectureMismatch,

    #[error("holdout rows {0:?} were used to fit preprocessing statistics")]
    Leakage(Vec<u64>),

    /// `location` is the file, with a line number when one is known.
    #[error("{location}: config error at `{field}`: {message}")]
    Config {
        location: String,
        field: String,
        message: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
