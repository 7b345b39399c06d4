use alloc::string::String;

use crate::corpus::condition::ParseError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("inconsistent corpus: {0}")]
    Inconsistent(String),
    #[error("non-finite coordinate at point {point}, dimension {dim}")]
    NonFinite { point: usize, dim: usize },
    #[error("cannot normalize zero vector for angular metric")]
    ZeroVector,
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` is not covered by the conditional index")]
    NotIndexed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("condition matches no points")]
    EmptyCondition,
    #[error("structures were built over different corpora or trees")]
    Mismatch,
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("member set is degenerate: {0}")]
    DegenerateMembers(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
