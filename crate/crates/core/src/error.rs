use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A probability required to be bounded away from zero is not.
    #[error("overlap violated: {0}")]
    Overlap(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("did not converge after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    /// The requested estimate cannot be formed from the available data.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite value in {component} for record {record}")]
    NonFinite { record: usize, component: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True for errors caused by malformed or inconsistent user input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Row { .. }
                | Error::EmptyInput(_)
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Overlap(_)
                | Error::Io { .. }
                | Error::Csv { .. }
        )
    }
}
