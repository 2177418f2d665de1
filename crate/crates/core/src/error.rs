use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not satisfy an operation's contract.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside its valid domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A model, training or run configuration violates an invariant.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Structurally invalid file contents (CSV ordering, checkpoint header).
    #[error("format error: {0}")]
    Format(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    /// Training produced a non-finite loss.
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})"
    )]
    NumericalAbort {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
