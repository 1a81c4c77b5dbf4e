use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} out of range: got {got}, valid range {lo}..={hi}")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        lo: usize,
        hi: usize,
    },
    #[error("state space too large: {states} states exceeds cap {cap}")]
    CapExceeded { states: u128, cap: u128 },
    #[error("eigensolver did not converge in {context}: residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        context: String,
        residual: f64,
        iterations: usize,
    },
    #[error("state/kernel space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
