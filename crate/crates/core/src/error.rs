use alloc::string::String;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("data integrity error: {0}")]
    Integrity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numerical,
            Error::Validation(_) | Error::Range(_) | Error::Coverage(_) | Error::Integrity(_) => {
                ErrorClass::Data
            }
        }
    }

    /// Prefixes the message with extra context (stage, level, episode ...).
    pub fn context(self, ctx: &str) -> Self {
        use alloc::format;
        match self {
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Range(m) => Error::Range(format!("{ctx}: {m}")),
            Error::Coverage(m) => Error::Coverage(format!("{ctx}: {m}")),
            Error::Integrity(m) => Error::Integrity(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
