use thiserror::Error;

/// Everything that can go wrong outside of plain argument typos.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something out of range (negative tolerance, bad exponent, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An evaluation point landed on (or numerically too close to) a kernel singularity.
    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// An iterative solve (root bracket, Newton polish, quadrature refinement) did not converge.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A truncated sum could not certify the requested tolerance within its point budget.
    /// `value` is the best truncated value, `tail` the certified bound on what was dropped.
    #[error("truncation failure: value {value:.6e}, certified tail {tail:.3e} exceeds tolerance")]
    TruncationFailure { value: f64, tail: f64 },

    /// A built-in cross-check (dual-route constant, symmetry probe) disagreed with itself.
    #[error("self-check failure: {0}")]
    OracleFailure(String),

    /// Config file could not be parsed or failed validation.
    #[error("config error: {0}")]
    ConfigError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI. Success is 0; parse errors from clap use its own 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::ConfigError(_) => 2,
            Error::SolverFailure(_) | Error::Singularity(_) => 3,
            Error::TruncationFailure { .. } => 4,
            Error::OracleFailure(_) => 5,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
