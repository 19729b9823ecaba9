use thiserror::Error;

/// Failures surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}, line {line}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("{origin}: unknown key '{key}' on line {line}")]
    UnknownKey { origin: String, key: String, line: usize },

    #[error("{0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: minimax_infer::Error,
    },
}

impl CliError {
    pub fn core(context: impl Into<String>, source: minimax_infer::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything attributable to the inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 3,
            CliError::Core {
                source: minimax_infer::Error::Precondition(_),
                ..
            } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
