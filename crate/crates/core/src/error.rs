use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("x and y have different lengths ({x_len} vs {y_len})")]
    LengthMismatch { x_len: usize, y_len: usize },

    #[error("sample is empty")]
    Empty,

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("sample size {n} is too small: {reason}")]
    TooSmall { n: usize, reason: &'static str },

    #[error("permuted subset size {m} exceeds the {available} available off-diagonal pairs")]
    SubsetTooLarge { m: usize, available: usize },

    #[error("zero variance on {axis} axis")]
    ZeroVariance { axis: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
