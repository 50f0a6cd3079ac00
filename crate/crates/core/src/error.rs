use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cloud")]
    EmptyCloud,

    #[error("degenerate fit")]
    DegenerateFit,

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("missing {0}")]
    Missing(&'static str),

    #[error("kernel underflow; raise epsilon")]
    KernelUnderflow,

    #[error("infeasible mass: s = {mass} exceeds min(sum p, sum q) = {limit}")]
    InfeasibleMass { mass: f64, limit: f64 },

    #[error("problem size {rows}x{cols} exceeds the exact oracle bound of {max}")]
    OracleTooLarge { rows: usize, cols: usize, max: usize },

    #[error("overlap too small for batch size: {available} points, batch size {batch}")]
    OverlapTooSmall { available: usize, batch: usize },

    #[error("no confident correspondences")]
    NoConfidentCorrespondences,

    #[error("no valid hypothesis")]
    NoValidHypothesis,

    #[error("crop search could not reach overlap {target} (achievable range [{low}, {high}])")]
    CropSearch { target: f64, low: f64, high: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
