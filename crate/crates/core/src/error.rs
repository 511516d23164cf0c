use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimension mismatch, bad config, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The supplied probabilities cannot come from any valid joint distribution.
    #[error("data inconsistency: {0}")]
    DataInconsistency(String),

    /// The simplex hit its iteration cap. Carries the best feasible point, if any.
    #[error("solver stalled after {iterations} iterations")]
    SolverStalled {
        iterations: usize,
        best_point: Option<Vec<f64>>,
    },

    /// The solver terminated but its answer failed the independent feasibility re-check.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A unit record is outside the declared supports.
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },

    /// An estimator has nothing to average (e.g. zero observed outcomes).
    #[error("degenerate estimator: {0}")]
    DegenerateEstimator(String),

    /// An iterative estimator did not converge (probit stage of Heckman).
    #[error("estimator failed: {0}")]
    EstimatorFailed(String),

    /// Malformed input file.
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
