use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator has zero dimension")]
    EmptyOperator,

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("scattering operator is not unitary: ||S*S - I||_max = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("{what} is not Hermitian: ||A - A*||_max = {deviation:.3e}")]
    NotHermitian { what: String, deviation: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant `{invariant}` violated at t = {time}: magnitude {magnitude:.3e}")]
    InvariantViolation {
        time: f64,
        invariant: &'static str,
        magnitude: f64,
    },

    #[error("gain is not real at t = {time}: imaginary part {imag:.3e}")]
    NonRealGain { time: f64, imag: f64 },

    #[error(
        "embedding breakdown at t = {time}: weight {weight:.3e} with numerator {numerator:.3e}"
    )]
    EmbeddingBreakdown {
        time: f64,
        weight: f64,
        numerator: f64,
    },

    #[error("numerical blow-up at step {step} (t = {time}) in {what}")]
    NumericBlowup {
        step: usize,
        time: f64,
        what: &'static str,
    },

    #[error("malformed measurement record (line {line}): {msg}")]
    Record { line: usize, msg: String },

    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
