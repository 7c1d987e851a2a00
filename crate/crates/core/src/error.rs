use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the verification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("beat at sample {index} lacks context ({left} left / {right} right required)")]
    Boundary {
        index: usize,
        left: usize,
        right: usize,
    },

    #[error("correlation undefined: zero-variance input")]
    ZeroVariance,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("enrollment quality: {0}")]
    EnrollmentQuality(String),

    #[error("manifest rejected: {0}")]
    Manifest(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("subject {subject}: {source}")]
    Subject {
        subject: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Wraps an error with the subject it occurred for.
    pub fn for_subject(self, subject: &str) -> Self {
        Error::Subject {
            subject: subject.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
