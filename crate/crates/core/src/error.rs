use thiserror::Error;

/// Errors produced by the numerical kernels.
///
/// `Domain` covers precondition violations (odd Hermite index, empty
/// interval, argument outside a tabulated range). `Rejected` is reserved
/// for constructions that are well posed but fail a verification step,
/// e.g. a glued initial surface whose corner condition has the wrong sign.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("construction rejected: {0}")]
    Rejected(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("numerical blow-up: {0}")]
    NumericalBlowup(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::Rejected(msg.into())
    }
}
