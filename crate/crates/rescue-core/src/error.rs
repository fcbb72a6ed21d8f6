//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the optimization stack.
///
/// `Domain` covers bad arguments (out-of-bounds queries, invalid shapes),
/// `State` covers calls that are illegal for the current object state,
/// `Conditioning` covers numerical failures that survived jitter escalation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("state error: {0}")]
    State(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn conditioning(msg: impl Into<String>) -> Self {
        Error::Conditioning(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
