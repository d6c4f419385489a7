use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch in {context}: expected {expected}, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix not invertible (condition number {condition:e})")]
    NotInvertible { condition: f64 },

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("rho={rho} gives k_bar={k_bar}, violating 1 + 2*k_bar <= L={memory_len}")]
    InvalidRho {
        rho: f64,
        k_bar: usize,
        memory_len: usize,
    },

    #[error("no threshold yields M={0} strong interferers for this channel")]
    UnreachableM(usize),

    #[error("window index i'={i_prime} outside [{lo}, {hi}] for symbol {i}")]
    WindowOutOfRange {
        i: usize,
        i_prime: usize,
        lo: usize,
        hi: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
