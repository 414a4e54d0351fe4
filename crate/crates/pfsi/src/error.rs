use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value is outside the domain of the operation (NaN, wrong sign, ...).
    #[error("input domain error: {0}")]
    InputDomain(String),

    /// Two objects that must share a discretization do not.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative linear solve did not reach the requested tolerance.
    #[error("linear solver failed to converge: final residual {residual:.3e} after {iterations} iterations")]
    LinearSolve { residual: f64, iterations: usize },

    /// The nonlinear fluid solve stagnated on both the Newton and Picard paths.
    #[error("nonlinear solver stagnated: residual history {history:?}")]
    NonlinearSolve { history: Vec<f64> },

    /// Density dropped far below zero, outside the monitored band.
    #[error("density minimum {min_rho:.3e} fell below -0.1*M = {threshold:.3e}")]
    DensityNegative { min_rho: f64, threshold: f64 },

    /// An internal invariant was violated (indicates a bug, not bad input).
    #[error("internal error: {0}")]
    Internal(String),

    /// A sub-solver error wrapped with the continuation stage that produced it.
    #[error("stage '{stage}': {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
