use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid landscape: {0}")]
    InvalidLandscape(String),

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("model rejected: {0}")]
    ModelRejected(String),

    #[error("format error at {location}: {reason}")]
    Format { location: String, reason: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config/usage, 3 degenerate data,
    /// 4 format/version.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidLandscape(_)
            | Error::InvalidConfig { .. }
            | Error::Domain(_)
            | Error::UnknownPolicy(_)
            | Error::Io { .. } => 2,
            Error::DegenerateData(_) | Error::ModelRejected(_) => 3,
            Error::Format { .. } | Error::Version { .. } => 4,
        }
    }
}
