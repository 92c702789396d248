//! Simulation and numerical verification of outcome-conditioned unitary
//! measurement mechanisms.
//!
//! A single measurement run is modeled as `ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E` evolving
//! under a unitary `U^(θ)` chosen by the outcome `θ`. The crate builds such
//! unitaries, checks when they can exist at all, and verifies the lower bounds
//! on how strongly the final environment must depend on the initial system
//! state, with and without run-to-run noise.

pub mod bounds;
pub mod ensemble;
pub mod error;
pub mod feasibility;
pub mod mechanism;
pub mod qcore;

pub use error::{Error, Result};
pub use bounds::{appendix_chain, baseline_report, gentle_check, BoundReport, BoundStep, Regime, Relation};
pub use ensemble::{
    averaged_final_environment, central_member, diamond_distance_unitary, noisy_report, EnvironmentEnsemble,
    MechanismEnsemble, NoiseBudget,
};
pub use feasibility::{check_feasibility, FeasibilityReport};
pub use mechanism::{MeasurementScenario, OutcomeUnitary};
pub use qcore::{DensityMatrix, Factor, HilbertFactorization, Projector, PureState, Space};
