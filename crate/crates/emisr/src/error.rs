use std::path::Path;

use thiserror::Error;

/// Crate-wide error type. Variants group into the CLI exit-code classes:
/// configuration (2), data (3), numeric (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    ConfigParse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    Divergence { epoch: usize, batch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code class: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigParse { .. } => 2,
            Error::Dimension(_)
            | Error::Shape(_)
            | Error::Format { .. }
            | Error::Data(_)
            | Error::Io { .. } => 3,
            Error::Numeric(_) | Error::Divergence { .. } => 4,
        }
    }
}
