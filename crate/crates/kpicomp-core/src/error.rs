//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: u64, msg: String },

    #[error("csv format error: {0}")]
    CsvFormat(String),

    #[error("no cells survived ingestion: {0}")]
    EmptyDataset(String),

    #[error("series too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch between originals and reconstructions")]
    ShapeMismatch,

    #[error("signal variance is zero; SNR undefined")]
    ZeroVariance,

    #[error("no quantization indices to estimate a rate from")]
    EmptyIndexSet,

    #[error("no eligible cells for codec evaluation")]
    NoEligibleCells,

    #[error("KLT training needs at least 2 cells, got {0}")]
    NotEnoughTrainingCells(usize),

    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("decode verification failed: {0}")]
    DecodeMismatch(String),

    #[error("artifact format error: {0}")]
    ArtifactFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
