use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Gp2fError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Gp2fError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    Numeric { op: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Gp2fError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Gp2fError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Gp2fError::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Gp2fError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Prefix the message with where in a larger run the error happened.
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            Gp2fError::Numeric { op } => Gp2fError::Numeric {
                op: format!("{ctx}: {op}"),
            },
            Gp2fError::Protocol(m) => Gp2fError::Protocol(format!("{ctx}: {m}")),
            Gp2fError::Contract(m) => Gp2fError::Contract(format!("{ctx}: {m}")),
            Gp2fError::Config(m) => Gp2fError::Config(format!("{ctx}: {m}")),
            Gp2fError::Validation(m) => Gp2fError::Validation(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
