use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("could not place agent {agent} without overlap after {attempts} attempts (scenario too crowded)")]
    Placement { agent: usize, attempts: usize },

    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },

    #[error("observation layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite loss encountered; update aborted")]
    NonFiniteLoss,

    #[error("curve is flat over the normalisation range; cannot min-max normalise")]
    DegenerateNormalization,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
