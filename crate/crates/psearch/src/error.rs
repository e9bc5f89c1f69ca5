use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulus {0}: {1}")]
    InvalidModulus(u64, &'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty RNS basis")]
    EmptyBasis,
    #[error("operands are in different forms")]
    FormMismatch,
    #[error("operands have different limb lists")]
    LimbMismatch,
    #[error("invalid Galois element {0}")]
    InvalidGaloisElement(usize),
    #[error("missing key material: {0}")]
    MissingKey(String),
    #[error("noise budget exhausted ({0:.2} bits)")]
    NoiseBudgetExhausted(f64),
    #[error("modulus chain exhausted")]
    LastLevel,
    #[error("LSB drop ({0}, {1}) violates the error bound")]
    DropBound(u32, u32),
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
