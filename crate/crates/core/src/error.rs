use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {what} has {len}, need at least {min}")]
    TooShort {
        what: &'static str,
        len: usize,
        min: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid model state: {0}")]
    State(String),

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("invalid label {label} for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used by the command-line front end in machine-parsable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TooShort { .. } => "too_short",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::InsufficientData(_) => "insufficient_data",
            Error::State(_) => "state",
            Error::MissingModel(_) => "missing_model",
            Error::Integrity(_) => "integrity",
            Error::Undefined(_) => "undefined",
            Error::Label { .. } => "label",
            Error::Io { .. } => "io",
            Error::Wav(_) => "wav",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "config",
        }
    }
}
