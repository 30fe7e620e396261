//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("momentum integral at r = 0 with an angular-momentum dependent weight")]
    SingularRadius,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parity error: {0}")]
    Parity(String),

    #[error("generator syntax error: {0}")]
    GeneratorSyntax(String),

    #[error("no compactly supported steady state: {0}")]
    NoCompactSupport(String),

    #[error("admissibility violated: 2*gamma*m(r)/r reached {margin:.3e} at r = {r:.6e}")]
    AdmissibilityViolation { r: f64, margin: f64 },

    #[error("perturbation support leaks outside the steady-state support: {0}")]
    SupportLeak(String),

    #[error("inadmissible perturbed state: {0}")]
    InadmissiblePerturbation(String),

    #[error("time step rejected: {0}")]
    StepSize(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("file integrity: {0}")]
    Integrity(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
