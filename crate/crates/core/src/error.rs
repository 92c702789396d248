use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("factor ordering violated: {0}")]
    FactorOrder(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("no factors selected to keep")]
    EmptySelection,

    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),

    #[error("not a valid state: {0}")]
    InvalidState(String),

    #[error("not a valid projector: {0}")]
    InvalidProjector(String),

    #[error("degenerate projection: tr(P rho) = {0:e}")]
    DegenerateProjection(f64),

    #[error("rank {rank} out of range 1..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("operator is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("infeasible construction: d_S * D = {required} exceeds d_E = {available}")]
    InfeasibleConstruction { required: usize, available: usize },

    #[error("inadmissible system state: <o_theta|rho_S|o_theta> = {0:e}")]
    Inadmissible(f64),

    #[error("delta calibration did not converge after {steps} bisection steps (residual {residual:e})")]
    CalibrationFailed { steps: usize, residual: f64 },

    #[error("superposition recovery failed: span weight {0} < 0.5")]
    RecoveryFailed(f64),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
