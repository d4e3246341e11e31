use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("step length must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("exponent must be non-negative, got {0}")]
    NegativeExponent(f64),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("noise index {index} out of range for K = {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("noise dimension K = {k} exceeds state dimension N = {n}")]
    NoiseExceedsState { k: usize, n: usize },
    #[error("unknown example id {0}")]
    UnknownExample(u32),
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
    #[error("series truncation D must be at least 1")]
    ZeroTruncation,
    #[error("problem does not provide the derivative of B")]
    MissingDerivative,
    #[error("cannot chain an empty packet list")]
    EmptyChain,
    #[error("incompatible noise packets: {0}")]
    IncompatiblePackets(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
