use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected dimension {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    /// A CSV file could not be turned into a dataset. `row` is 1-based and
    /// counts the header as row 1, matching what an editor shows.
    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A caller broke an invariant owned by another component, for example
    /// rewarding a client that was already eliminated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no participants: every client has been eliminated")]
    NoParticipants,

    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the experiment description rather than by
    /// the run itself. The CLI maps these to exit status 1.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parameter(_))
    }
}
