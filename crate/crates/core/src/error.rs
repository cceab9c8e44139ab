use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// No separating decision threshold exists between two hypotheses.
    #[error("degenerate detection problem: {0}")]
    Degenerate(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("series did not converge: {0}")]
    NoConvergence(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
