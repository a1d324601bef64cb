use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, its diagnostics and the run harness.
#[derive(Debug, Error)]
pub enum QlgError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("fit window [{k_lo}, {k_hi}] has {usable} usable shells, need at least 3")]
    Window { k_lo: usize, k_hi: usize, usable: usize },

    #[error("zero-norm field")]
    ZeroNorm,

    #[error("kinetic energy is zero, energy ratios are undefined")]
    ZeroKineticEnergy,

    #[error("winding indeterminate: |phi|^2 = {density:e} below floor at loop site {site:?}")]
    IndeterminateWinding { site: [usize; 3], density: f64 },

    #[error("numeric invariant violated: {0}")]
    NumericInvariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl QlgError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        QlgError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = QlgError> = std::result::Result<T, E>;
