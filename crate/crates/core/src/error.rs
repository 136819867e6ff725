use thiserror::Error;

/// Errors raised by geometry, field, and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry in element {element}: {reason}")]
    DegenerateGeometry { element: usize, reason: String },

    #[error("degenerate direction field in element {element}")]
    DegenerateDirection { element: usize },

    #[error("conflicting Dirichlet constraints: {0}")]
    ConstraintConflict(String),

    #[error("inconsistent parameters: {0}")]
    ParameterInconsistency(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("nonlinear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("active contraction overflow: gamma*alpha = {0} must be < 1")]
    ContractionOverflow(f64),

    #[error("fiber energy overflow: exponent {0:.1} exceeds 700")]
    EnergyOverflow(f64),

    #[error("inverted material state: det F = {0:.3e}")]
    InvertedState(f64),

    #[error("collapsed radius in element {element}: circumferential stretch {stretch:.3e}")]
    CollapsedRadius { element: usize, stretch: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of an iterative solver to reach its tolerance.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::LinearSolver { .. } | Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
