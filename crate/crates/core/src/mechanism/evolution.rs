use num_complex::Complex64;

use super::{MeasurementScenario, OutcomeUnitary};
use crate::error::{Error, Result};
use crate::qcore::{
    hermitian_eigen, kron, partial_trace, CMatrix, DensityMatrix, Factor,
};

/// Residuals below this are rounding noise and reported as exactly zero.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// All states produced by one run `ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E → U(·)U†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub joint: DensityMatrix,
    pub system_env: DensityMatrix,
    pub environment: DensityMatrix,
    pub apparatus: DensityMatrix,
    /// `tr((I − Π_D) ρ_E)` of the initial environment.
    pub tail_weight: f64,
}

impl Evolution {
    pub fn system(&self) -> DensityMatrix {
        partial_trace(&self.system_env, &[Factor::System]).expect("S ⊗ E state")
    }
}

fn check_inputs(
    u: &OutcomeUnitary,
    rho_s: &DensityMatrix,
    rho_e: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<()> {
    let f = sc.factorization();
    if u.matrix().nrows() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: u.matrix().nrows() });
    }
    if u.outcome() != sc.outcome() {
        return Err(Error::InvalidScenario(format!(
            "mechanism built for outcome {} applied to outcome {}",
            u.outcome(),
            sc.outcome()
        )));
    }
    if rho_e.dim() != f.environment {
        return Err(Error::DimensionMismatch { expected: f.environment, found: rho_e.dim() });
    }
    sc.admissibility(rho_s)?;
    Ok(())
}

/// Evolves `ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E` under the mechanism and returns every reduced state.
pub fn apply_mechanism(
    u: &OutcomeUnitary,
    rho_s: &DensityMatrix,
    rho_e: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<Evolution> {
    check_inputs(u, rho_s, rho_e, sc)?;
    let f = sc.factorization();
    let initial_se = kron(rho_s.matrix(), rho_e.matrix());
    let block = u.ready_block();
    let joint = DensityMatrix::from_evolved(block * initial_se * block.adjoint(), f.joint());
    let system_env = partial_trace(&joint, &[Factor::System, Factor::Environment])?;
    // reduced directly from the joint state, as in `final_environment`, so both agree bit for bit
    let environment = partial_trace(&joint, &[Factor::Environment])?;
    let apparatus = partial_trace(&joint, &[Factor::Apparatus])?;
    let tail_weight = sc.dominant_projector().complement().weight(rho_e).clamp(0.0, 1.0);
    Ok(Evolution { joint, system_env, environment, apparatus, tail_weight })
}

/// Final environment only: `tr_SA(U ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E U†)`.
pub fn final_environment(
    u: &OutcomeUnitary,
    rho_s: &DensityMatrix,
    rho_e: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<DensityMatrix> {
    check_inputs(u, rho_s, rho_e, sc)?;
    let f = sc.factorization();
    let initial_se = kron(rho_s.matrix(), rho_e.matrix());
    let block = u.ready_block();
    let joint = DensityMatrix::from_evolved(block * initial_se * block.adjoint(), f.joint());
    partial_trace(&joint, &[Factor::Environment])
}

/// `1 − ⟨o_θ| tr_E(ρ_SE) |o_θ⟩`, clamped to `[0, 1]`.
pub fn residual_delta(rho_se: &DensityMatrix, sc: &MeasurementScenario) -> Result<f64> {
    let f = sc.factorization();
    let expected = f.system * f.environment;
    if rho_se.dim() != expected {
        return Err(Error::DimensionMismatch { expected, found: rho_se.dim() });
    }
    let tagged = if rho_se.space().is_anonymous() {
        rho_se.clone().with_space(f.space_of(&[Factor::System, Factor::Environment]))?
    } else {
        rho_se.clone()
    };
    let rho_sys = partial_trace(&tagged, &[Factor::System])?;
    let delta = (1.0 - rho_sys.expectation(sc.observable(sc.outcome()))).clamp(0.0, 1.0);
    Ok(if delta < RESIDUAL_FLOOR { 0.0 } else { delta })
}

/// Largest pointer population `max_i ⟨a_i|ρ_A|a_i⟩`.
pub fn apparatus_definiteness(rho_a: &DensityMatrix, sc: &MeasurementScenario) -> f64 {
    sc.pointers().iter().map(|a| rho_a.expectation(a)).fold(0.0, f64::max)
}

/// Reads `(α, β)` of an input `(α|o_θ⟩ + β|o_other⟩)|a_0⟩|e_k⟩` back out of
/// the final environment via the images `|ẽ_{θ,k}⟩`, `|ẽ_{other,k}⟩`.
///
/// The result is normalized with its largest-modulus component real and positive.
pub fn recover_superposition(
    u: &OutcomeUnitary,
    k: usize,
    other: usize,
    rho_e_final: &DensityMatrix,
) -> Result<(Complex64, Complex64)> {
    let theta = u.outcome();
    if other == theta {
        return Err(Error::InvalidParameter("recovery needs a second outcome".into()));
    }
    let first = u.image(theta, k);
    let second = u.image(other, k);
    let basis = CMatrix::from_columns(&[first.clone(), second.clone()]);
    let restricted = basis.adjoint() * rho_e_final.matrix() * &basis;
    let weight = restricted.trace().re;
    if weight < 0.5 {
        return Err(Error::RecoveryFailed(weight));
    }
    let (_, vecs) = hermitian_eigen(&restricted);
    let lead = &vecs[0];
    Ok((lead[0], lead[1]))
}

/// Trace distance between the pure states `α̂|0⟩ + β̂|1⟩` and `α|0⟩ + β|1⟩`.
///
/// Uses `2|α̂β − β̂α|`, which equals `2√(1 − |⟨ψ̂|ψ⟩|²)` for unit vectors but
/// does not lose precision when the states nearly coincide.
pub fn recovery_error(recovered: (Complex64, Complex64), truth: (Complex64, Complex64)) -> f64 {
    let (ah, bh) = recovered;
    let (a, b) = truth;
    2.0 * (ah * b - bh * a).norm()
}
