//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("invalid action {action}; action space has {count} actions")]
    InvalidAction { action: usize, count: usize },

    #[error("step called after the episode terminated")]
    EpisodeFinished,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("batch mismatch: {0}")]
    Batch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("reference point must be component-wise <= every front member")]
    BadReferencePoint,

    #[error("enumeration bound exceeded: about {estimate:.3e} candidate policies")]
    EnumerationBound { estimate: f64 },

    #[error("solution {0} not found")]
    MissingSolution(String),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
