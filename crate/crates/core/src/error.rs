use thiserror::Error;

use crate::sampling::AtomIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scale {j} outside cached range [{min}, {max}]")]
    Range { j: i32, min: i32, max: i32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coefficient field is tagged {found}, expected {expected}; convert first")]
    ConversionRequired { expected: String, found: String },

    #[error("singular zero-frequency mode: {0}")]
    SingularMode(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undecidable orthogonality between rank {rank} and profile {profile}")]
    UndecidableOrthogonality { rank: usize, profile: usize },

    #[error("coefficient at rank {rank} does not converge over the tail (radius {radius:e})")]
    NonconvergentCoefficient { rank: usize, radius: f64 },

    #[error("generator error: {0}")]
    Generator(String),

    #[error("duplicate atom index {0:?}")]
    DuplicateIndex(AtomIndex),

    #[error("line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("internal invariant failure: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn ingest(line: usize, message: impl Into<String>) -> Self {
        Error::Ingest {
            line,
            message: message.into(),
        }
    }
}
