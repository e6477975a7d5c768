use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("solver failed: {0}")]
    Solve(String),
    #[error("unstable scheme: {0}")]
    Stability(String),
    #[error("no convergence: {0}")]
    Convergence(String),
}

impl Error {
    /// True for errors caused by bad user data rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Input(_))
    }

    /// Prefix the message with extra location info, keeping the variant.
    pub fn context(self, what: impl std::fmt::Display) -> Error {
        match self {
            Error::Domain(m) => Error::Domain(format!("{what}: {m}")),
            Error::Input(m) => Error::Input(format!("{what}: {m}")),
            Error::Solve(m) => Error::Solve(format!("{what}: {m}")),
            Error::Stability(m) => Error::Stability(format!("{what}: {m}")),
            Error::Convergence(m) => Error::Convergence(format!("{what}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
