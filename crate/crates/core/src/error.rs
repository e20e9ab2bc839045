use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model object violates one of its defining invariants.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Shapes or structure do not fit together (dimension mismatch, reducible chain).
    #[error("structural error: {0}")]
    Structural(String),

    /// A linear solve or series evaluation failed numerically.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The model is not in the stable region ρ < 1.
    #[error("unstable model: rho = {rho} (must be < 1)")]
    Stability { rho: f64 },

    /// An operation was called on a model it does not apply to.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Caller supplied inconsistent run parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A Lyapunov ratio functional has a vanishing denominator.
    #[error("degenerate state at level {level}: {reason}")]
    DegenerateState { level: usize, reason: String },

    /// The integrator left the admissible region [0, 1].
    #[error("integration blew up at t = {t}: {reason}")]
    IntegrationBlowUp { t: f64, reason: String },

    /// A regression could not be fitted.
    #[error("fit failed: {0}")]
    Fit(String),

    #[error("csv output failed: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Output(e.to_string())
    }
}
