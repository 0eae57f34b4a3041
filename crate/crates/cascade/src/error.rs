use std::path::PathBuf;

use unfold_core::error::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] unfold_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A malformed or invalid row; `line` is one-based and counts the header.
    #[error("{}:{line}: {source}", path.display())]
    Row { path: PathBuf, line: u64, source: unfold_core::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Process exit status: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        let class = match self {
            Error::Core(e) | Error::Row { source: e, .. } => e.class(),
            Error::Io { .. } | Error::Json { .. } => ErrorClass::Data,
            Error::Usage(_) => ErrorClass::Usage,
        };
        match class {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
