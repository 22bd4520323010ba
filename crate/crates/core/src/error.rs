use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite state encountered ({0})")]
    NonFiniteState(&'static str),
    #[error("degenerate radius: cylindrical coordinates undefined at r = 0")]
    DegenerateRadius,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pivot block {block} is not positive definite")]
    NotPositiveDefinite { block: usize },
    #[error("dense solve of size {size} exceeds the limit {limit}")]
    SizeLimitExceeded { size: usize, limit: usize },
    #[error("dense KKT matrix is singular")]
    Singular,
    #[error("map `{0}` has no analytic shadowing direction")]
    NoAnalyticDirection(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
