use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, RevarError>;

/// Errors produced by the fitting, synthesis, metrics, and persistence layers.
#[derive(Debug, Error)]
pub enum RevarError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error(
        "degenerate pixel at (row {row}, col {col}): sample std {std:.3e} is at or below \
         the floor {floor:.3e}"
    )]
    DegeneratePixel {
        row: usize,
        col: usize,
        std: f64,
        floor: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error(
        "underdetermined least-squares system: {rows} usable rows but {cols} unknowns per \
         component; need at least N_T - N_L >= N_c * (N_L + N_m) training steps"
    )]
    Underdetermined { rows: usize, cols: usize },

    #[error("no spectral peak found: {0}")]
    NoPeak(String),

    #[error("filter gain out of range: alpha[{index}] = {value}, must lie in (0, 1]")]
    InvalidAlpha { index: usize, value: f64 },

    #[error("synthesis diverged at step {step}: {detail}")]
    Unstable { step: usize, detail: String },

    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl RevarError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RevarError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        RevarError::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn dims(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        RevarError::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Process exit code for the CLI: 2 for rejected inputs, 3 for numerical
    /// or stability failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RevarError::NonFinite(_)
            | RevarError::NoPeak(_)
            | RevarError::Unstable { .. }
            | RevarError::DegeneratePixel { .. } => 3,
            _ => 2,
        }
    }
}
