use thiserror::Error;

/// Errors raised by problem construction, projections, solvers and I/O.
#[derive(Debug, Error)]
pub enum MmboError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("set is infeasible: {0}")]
    Infeasible(String),

    #[error("set is unbounded: {0}")]
    Unbounded(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "stale inner maximizer: gradient mapping {residual:.3e} exceeds threshold {threshold:.3e}"
    )]
    StaleMaximizer { residual: f64, threshold: f64 },

    #[error("non-finite iterate at outer iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("missing second-order oracle for the lower-level objective")]
    MissingSecondOrder,

    #[error("singular lower-level Hessian: smallest eigenvalue {0:.3e}")]
    SingularHessian(f64),

    #[error("index-set classification failed: {0}")]
    Classification(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for MmboError {
    fn from(e: serde_json::Error) -> Self {
        MmboError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MmboError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(MmboError::Dimension {
            context,
            expected,
            got,
        })
    }
}
