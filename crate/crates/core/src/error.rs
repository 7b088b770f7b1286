use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("duplicate id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("requested {requested} examples of `{label}` but only {available} are available")]
    InsufficientExamples {
        label: String,
        requested: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },

    #[error("empty completion")]
    EmptyCompletion,

    #[error("provider error: {0}")]
    Provider(String),

    #[error("illegal transition from {from} to {to}")]
    IllegalTransition { from: String, to: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("trainer failed: {0}")]
    Trainer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
