//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix shape mismatch (non-square input, incompatible dimensions, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// Input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vertex label or id could not be decoded for the given graph family.
    #[error("codec error: {0}")]
    Codec(String),

    /// A textual spec (graph grammar, permutation, rational) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// A bounded search ran out of budget before finding a witness.
    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    /// Numerically inconsistent input (e.g. base-point dependent wreath data).
    #[error("consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
