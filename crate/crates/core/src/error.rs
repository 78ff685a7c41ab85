use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_args(msg: impl Into<String>) -> Error {
    Error::InvalidArgs(msg.into())
}

pub(crate) fn invalid_params(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
