use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("Fock dimension {dim} exceeds limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("coherent-vector truncation tail {tail:e} above hard limit {limit:e}")]
    Truncation { tail: f64, limit: f64 },

    #[error("form factor must be real; apply gauge_to_real first")]
    ComplexInput,

    #[error("unstable estimate at t = {t}: mean {mean:e} within 3 stderr ({stderr:e}) of zero")]
    UnstableEstimate { t: f64, mean: f64, stderr: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
