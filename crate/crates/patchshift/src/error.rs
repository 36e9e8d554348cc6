use std::path::PathBuf;

use thiserror::Error;

/// Failures of the command-line layer, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration, unknown names. Exit 2.
    #[error("{0}")]
    Config(String),
    /// Data that does not match the configured shapes or formats. Exit 3.
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

impl From<patchshift_core::Error> for CliError {
    fn from(e: patchshift_core::Error) -> Self {
        match e {
            patchshift_core::Error::Dimension { .. } => Self::Data(e.to_string()),
            patchshift_core::Error::Contract(_) => Self::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
