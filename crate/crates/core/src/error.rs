use thiserror::Error;

/// Errors raised by the solver, the aggregators and the verification harness.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DpError {
    /// A model file that is not well-formed, with line and key context.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    /// A parameter choice outside the preference regimes the solver covers
    /// (for example `rho >= gamma`, or a regime label that does not match `(rho, gamma)`).
    #[error("unsupported regime: {0}")]
    Regime(String),

    #[error("action {action} is not feasible at state {state}")]
    Infeasible { state: usize, action: usize },

    #[error("domain error at state {state}: {message}")]
    Domain { state: usize, message: String },

    #[error("value {value} at state {state} lies outside the bracket [{lower}, {upper}]")]
    OutsideBracket {
        state: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("conjugation requires a minimizing aggregator")]
    Direction,

    #[error("no convergence after {} iterations (last residual {:e})", residuals.len(), residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { residuals: Vec<f64> },

    #[error("root search failed: {0}")]
    SearchFailure(String),

    #[error("policy enumeration needs {count} policies, limit is {limit}")]
    EnumerationGuard { count: f64, limit: usize },
}

pub type Result<T, E = DpError> = std::result::Result<T, E>;
