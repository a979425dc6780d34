use std::io;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A network, head, or weight description is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A spatial computation would produce an empty or negative extent.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A caller passed arguments outside an operation's domain.
    #[error("usage error: {0}")]
    Usage(String),
    /// Weights are missing or do not match the shapes the network needs.
    #[error("load error: {0}")]
    Load(String),
    /// A file did not parse. `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset: offset as u64,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
