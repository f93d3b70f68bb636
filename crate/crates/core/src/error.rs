use thiserror::Error;

/// Errors produced by model construction, the oracles and the recovery pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero marginal mass at node {node}, symbol {symbol}")]
    ZeroMarginal { node: usize, symbol: usize },
    #[error("pair ({0}, {1}) is singular")]
    SingularPair(usize, usize),
    #[error("joint table of {0} cells exceeds the brute-force size guard")]
    TooLarge(u128),
    #[error("format error: {0}")]
    Format(String),
    #[error("recovery failed: {0}")]
    Recovery(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
