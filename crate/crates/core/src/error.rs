use crate::optimize::OptimizeReport;
use crate::solver::NewtonReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solver failed: relative residual {residual:.3e} ({reason})")]
    SolverFailure { residual: f64, reason: String },

    #[error("Newton iteration did not converge after {} iterations (last residual {:.3e})",
        .0.iterations, .0.residual_history.last().copied().unwrap_or(f64::NAN))]
    NewtonNonconvergence(Box<NewtonReport>),

    #[error("optimizer failed after {} iterations: {reason}", .report.iterations)]
    OptimizerFailure {
        reason: String,
        report: Box<OptimizeReport>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
