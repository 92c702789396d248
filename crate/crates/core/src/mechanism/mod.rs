//! Outcome-conditioned mechanisms: construction, application and readout.

mod builder;
mod control;
mod evolution;
mod scenario;

pub use builder::{
    build_exact_mechanism, build_exact_mechanism_with, build_perturbed_mechanism, perturb_mechanism,
    ImageFamily, MechanismOptions, OutcomeUnitary, Perturbation, CALIBRATION_STEPS, CALIBRATION_TOL,
};
pub use control::{observable_state, von_neumann_control, ControlRun};
pub use evolution::{
    apparatus_definiteness, apply_mechanism, final_environment, recover_superposition, recovery_error,
    residual_delta,
    Evolution, RESIDUAL_FLOOR,
};
pub use scenario::{MeasurementScenario, ADMISSIBILITY_THRESHOLD};
