use thiserror::Error;

/// Errors produced by matching construction, solving, training and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("exact solver refused: {0}")]
    NodeLimit(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing ground-truth labels: {0}")]
    MissingLabels(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
