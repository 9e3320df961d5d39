use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed call: wrong vector length, out-of-range agent id.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Population state left the simplex.
    #[error("state error: {0}")]
    State(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Trigger rule parameters violate `lambda2 - a * |N_i| > 0`.
    #[error("infeasible trigger parameters for agent {agent}: {detail}")]
    InfeasibleParameter { agent: usize, detail: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from bad input rather than a failed integration.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io { .. })
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Argument(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}
