//! Shared error type for the toolkit.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration object is internally inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// One or more classes could not be connected to the required root.
    #[error("no path to root for classes: {0:?}")]
    UnresolvedClasses(Vec<String>),

    /// A noise manifest contains label assignments outside the legal
    /// candidate sets.
    #[error("noise audit failed: {count} illegal assignments (offending ids: {ids:?})")]
    AuditFailure { count: usize, ids: Vec<String> },

    /// Training produced a non-finite loss and stopped.
    #[error("training aborted at iteration {iteration}: {message}")]
    TrainingAborted { iteration: usize, message: String },

    /// A structured input file could not be parsed.
    #[error("parse error in {path} (line {line}): {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
