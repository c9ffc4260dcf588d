use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("blow-up: {what}; last valid time t = {time}")]
    BlowUp { time: f64, what: String },
    #[error("root bracketing failed for (n = {n}, k = {k})")]
    Bracketing { n: usize, k: i64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
