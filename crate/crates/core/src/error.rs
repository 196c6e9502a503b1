use thiserror::Error;

/// Errors raised by the model, samplers, diagnostics and experiment runner.
#[derive(Debug, Error)]
pub enum AbcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A particle whose weight cannot be formed, or a weight vector with no mass.
    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),

    #[error(
        "simulation budget exceeded at iteration {iteration} (epsilon = {epsilon}): \
         {calls} simulator calls, limit {limit}"
    )]
    BudgetExceeded {
        iteration: usize,
        epsilon: f64,
        calls: u64,
        limit: u64,
    },

    #[error("variance undefined for {0} particle(s); need at least 2")]
    VarianceUndefined(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AbcError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AbcError {
    AbcError::InvalidInput(msg.into())
}
