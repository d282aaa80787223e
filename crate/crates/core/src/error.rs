use thiserror::Error;

/// Contract violations and input errors raised by the decoding core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distributions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("distribution is empty")]
    EmptyDistribution,

    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("weights sum to {sum}, outside the accepted band around 1")]
    NotNormalized { sum: f64 },

    #[error("residual undefined: target mass never exceeds the proposal")]
    ResidualUndefined,

    #[error("k = {k} out of range for vocabulary of size {vocab}")]
    KOutOfRange { k: usize, vocab: usize },

    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },

    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: usize, found: usize },

    #[error("draft token {token} has zero drafter probability")]
    ZeroDraftProbability { token: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tree spec line {line}, node {node}: {reason}")]
    TreeSpec { line: usize, node: String, reason: String },

    #[error("unknown tree preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("codebook line {line}: {reason}")]
    CodebookFormat { line: usize, reason: String },

    #[error("incompatible session config: {0}")]
    IncompatibleConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
