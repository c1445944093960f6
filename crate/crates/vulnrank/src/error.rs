//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate response")]
    DegenerateResponse,
    #[error("degenerate factor: {0}")]
    DegenerateFactor(String),
    #[error("unknown level: {0}")]
    UnknownLevel(String),
    #[error("unknown label: {0}")]
    UnknownLabel(String),
    #[error("unknown risk factor: {0}")]
    UnknownRiskFactor(String),
    #[error("invalid count")]
    InvalidCount,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("singular design")]
    SingularDesign,
    #[error("insufficient data")]
    InsufficientData,
    #[error("empty category: level {0} unobserved")]
    EmptyCategory(usize),
    #[error("separation: coefficient diverging on standardized covariates")]
    Separation,
    #[error("empty neighborhood")]
    EmptyNeighborhood,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
