use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// Best iterate reached before giving up, when one exists.
        best: Option<Vec<f64>>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, best: Option<Vec<f64>>) -> Self {
        Error::Numerical {
            message: msg.into(),
            best,
        }
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
