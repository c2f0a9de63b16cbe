use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected \"MTS1\"")]
    BadMagic { path: PathBuf },
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("SVD failed: {0}")]
    Svd(String),
    #[error("conjugate gradient broke down at iteration {iteration}")]
    CgBreakdown { iteration: usize },
    #[error("line search failed after {backtracks} backtracks at Newton iteration {iteration}")]
    LineSearch { iteration: usize, backtracks: usize },
    #[error("solver state became non-finite at outer iteration {iteration}")]
    NonFiniteState { iteration: usize },
    #[error("iteration cap of {cap} reached")]
    IterationCap { cap: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
