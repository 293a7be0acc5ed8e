use std::io;

use thiserror::Error;

/// Errors produced by the ranking library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments or parameters supplied by the caller.
    #[error("invalid input: {0}")]
    Input(String),

    /// A descriptor, graph or JSON file does not conform to its format.
    #[error("format error: {0}")]
    Format(String),

    /// The requested method cannot run at this problem size.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
