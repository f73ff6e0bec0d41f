use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("driving force vanishes on an active switching set (|E_hat| = {magnitude:e} V/m)")]
    DegenerateDirection { magnitude: f64 },

    #[error("singular Jacobian in {context}")]
    SingularMatrix { context: String },

    #[error("active sets still changing after {loops} loops; history: {history}")]
    ActiveSetCycling { loops: usize, history: String },

    #[error("solver did not converge at step {step}: {reason}")]
    StepFailed { step: usize, reason: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("load program is not uniaxial: {0}")]
    NotUniaxial(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the nonlinear solution procedure, as opposed to
    /// bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDirection { .. }
                | Error::SingularMatrix { .. }
                | Error::ActiveSetCycling { .. }
                | Error::StepFailed { .. }
        )
    }
}
