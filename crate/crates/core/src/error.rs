use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong anywhere in the twin pipeline.
///
/// Variants map onto the CLI exit-code contract through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A serialized artifact could not be decoded.
    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    /// The dataset cannot be split as requested.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// Out-of-order or duplicate message on the RIC bus.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A non-finite value appeared in a numeric routine.
    #[error("numeric error at iteration {iteration}: {reason}")]
    Numeric { iteration: usize, reason: String },

    /// Training diverged or failed to reduce the loss.
    #[error("training error at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    /// The closed-loop pipeline failed for a reason other than bad input.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 validation, 3 I/O, 4 numeric, 5 pipeline.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Config { .. }
            | Error::Format { .. }
            | Error::Stratification(_)
            | Error::Protocol(_) => 2,
            Error::Io { .. } => 3,
            Error::Numeric { .. } | Error::Training { .. } => 4,
            Error::Pipeline(_) => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
