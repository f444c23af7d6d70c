use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ObjectId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("object {0} is not in the catalog")]
    UnknownObject(ObjectId),

    #[error("object {id} ({size_mb} MB) does not fit in a {capacity_mb} MB cache")]
    ObjectTooLarge {
        id: ObjectId,
        size_mb: f64,
        capacity_mb: f64,
    },

    #[error("placement capacity exceeded: {0}")]
    Capacity(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("refusing to compare: {0}")]
    Mismatch(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable tag used in one-line CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Param(_) => "param",
            Error::UnknownObject(_) => "unknown-object",
            Error::ObjectTooLarge { .. } => "object-too-large",
            Error::Capacity(_) => "capacity",
            Error::Parse { .. } => "parse",
            Error::Config { .. } => "config",
            Error::Mismatch(_) => "mismatch",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
