//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A loss evaluation or parameter update produced a non-finite value.
    #[error("landscape evaluation overflowed to a non-finite value")]
    LandscapeOverflow,

    #[error("invalid parameter vector: {0}")]
    InvalidParams(String),

    /// Configuration rejected during validation; `path` names the offending
    /// field with dotted-path notation (e.g. `search.sigma`).
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A block mint was attempted against a parent that is no longer the
    /// miner's local head.
    #[error("mint rejected: parent is no longer the local chain head")]
    StaleMint,

    #[error("transcript error: {0}")]
    Transcript(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Config { path: path.into(), message: message.into() }
    }
}
