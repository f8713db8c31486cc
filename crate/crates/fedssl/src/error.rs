use std::path::PathBuf;

use fedssl_core::federation::RoundError;

/// Failures surfaced by the CLI, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input `{}`", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}, line {line}: {source}", path.display())]
    Parse { path: PathBuf, line: usize, source: fedssl_core::Error },
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed at {0}")]
    Training(#[from] RoundError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 configuration, 3 data, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingInput(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) => 3,
            Error::Training(_) => 4,
        }
    }
}

/// Core errors from validating user-supplied settings.
pub(crate) fn config_err(e: fedssl_core::Error) -> Error {
    Error::Config(e.to_string())
}

/// Core errors raised while processing data.
pub(crate) fn data_err(e: fedssl_core::Error) -> Error {
    match e {
        fedssl_core::Error::Config(m) => Error::Config(m),
        other => Error::Data(other.to_string()),
    }
}

pub(crate) fn json_err(path: &std::path::Path, e: serde_json::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}
