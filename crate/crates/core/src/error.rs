use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("draw does not match ensemble: {0}")]
    DrawMismatch(String),

    #[error("energy {energy} lies outside the admissible set: {reason}")]
    Domain { energy: f64, reason: String },

    #[error("empty window: lower bound {lower} exceeds upper bound {upper}")]
    InvertedWindow { lower: f64, upper: f64 },

    #[error(
        "window ({lower}, {upper}] holds {count} eigenvalues, more than the limit of {limit}; \
         narrow the window or raise `max_window_eigs`"
    )]
    WindowTooLarge {
        lower: f64,
        upper: f64,
        count: usize,
        limit: usize,
    },

    #[error("matrix of size {size} exceeds the dense oracle cap of {cap}")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("eigenvalue {energy} is not simple: gap {gap:e} is below the floor {floor:e}")]
    Degenerate { energy: f64, gap: f64, floor: f64 },

    #[error("zero vector")]
    ZeroVector,

    #[error("bad eigenpair: {0}")]
    BadEigenpair(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid too coarse: spacing {spacing:e} exceeds the required resolution {required:e}")]
    GridTooCoarse { spacing: f64, required: f64 },

    #[error("energy {energy} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { energy: f64, lo: f64, hi: f64 },

    #[error("overlapping {0}")]
    Overlap(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
