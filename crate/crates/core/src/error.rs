use thiserror::Error;

/// Errors raised by the numeric, model, data, and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{file}: {field}: {reason}")]
    Format {
        file: String,
        field: &'static str,
        reason: String,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("operation requires {expected} parameters, got {found}")]
    Role {
        expected: &'static str,
        found: &'static str,
    },

    #[error("operation not supported by {model} model: {op}")]
    ModelKind {
        model: &'static str,
        op: &'static str,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }
}
