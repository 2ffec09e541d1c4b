//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by configuration parsing, solvers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file is malformed or violates a constraint.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine received arguments outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver error: {0}")]
    Solver(String),

    /// A simulation invariant was violated at run time.
    #[error("run error: {0}")]
    Run(String),

    /// Binary or CSV artifact is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
