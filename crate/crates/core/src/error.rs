use std::path::PathBuf;

use thiserror::Error;

use crate::tensors::Domain;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain mismatch: expected {expected:?}, found {found:?}")]
    Domain { expected: Domain, found: Domain },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("non-finite value at iteration {iteration}, stage {stage} (max |value| = {max_abs})")]
    NonFinite {
        iteration: usize,
        stage: &'static str,
        max_abs: f64,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain { .. } => "domain",
            Error::Param(_) => "param",
            Error::NonFinite { .. } => "nonfinite",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
