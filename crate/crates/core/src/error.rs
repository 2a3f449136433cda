use std::path::PathBuf;

use thiserror::Error;

/// Problems with a configuration file or a configuration value.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: cannot parse value `{value}` for key `{key}`")]
    Unparsable { line: usize, key: String, value: String },
    #[error("value out of range for `{key}`: {reason}")]
    OutOfRange { key: String, reason: String },
}

impl ConfigError {
    pub fn out_of_range(key: &str, reason: &str) -> Self {
        Self::OutOfRange { key: key.to_owned(), reason: reason.to_owned() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called before forward")]
    NoForwardCache,
    #[error("non-finite {what} ({context})")]
    NonFinite { what: String, context: String },
    #[error("replay memory holds {len} of {capacity} transitions; sampling starts once it is full")]
    ReplayNotFull { len: usize, capacity: usize },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    pub fn non_finite(what: impl Into<String>, context: impl Into<String>) -> Self {
        Self::NonFinite { what: what.into(), context: context.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
