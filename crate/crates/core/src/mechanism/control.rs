use super::{apparatus_definiteness, MeasurementScenario};
use crate::error::{Error, Result};
use crate::qcore::{
    derive_seed, haar_unitary, partial_trace, rng_from_seed, CMatrix, CVector,
    DensityMatrix, Factor, PureState,
};

const POINTER_STREAM: u64 = 0xC0_117B;

/// The single shared unitary of the textbook measurement model, with the
/// pointer outcome it produces for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRun {
    pub unitary: CMatrix,
    /// `|φ_0⟩` followed by the correlated environment states `|φ_i⟩`.
    pub env_start: CVector,
    pub env_pointers: Vec<CVector>,
    pub apparatus: DensityMatrix,
    pub definiteness: f64,
}

/// Builds `U|o_i⟩|a_0⟩|φ_0⟩ = |o_i⟩|a_i⟩|φ_i⟩` for every outcome and evolves
/// `|ψ_S⟩|a_0⟩|φ_0⟩` with it.
///
/// `|φ_0⟩` is the first dominant environment vector; `|φ_i⟩` are seeded
/// orthonormal environment states. By linearity a superposed input ends in an
/// entangled state whose apparatus has no definite pointer.
pub fn von_neumann_control(sc: &MeasurementScenario, input: &PureState) -> Result<ControlRun> {
    let f = sc.factorization();
    if input.dim() != f.system {
        return Err(Error::DimensionMismatch { expected: f.system, found: input.dim() });
    }
    if f.environment < f.system {
        return Err(Error::InvalidScenario("orthogonal environment pointers need d_E >= d_S".into()));
    }
    let env_start = sc.dominant_env_basis()[0].clone();
    let frame = haar_unitary(&mut rng_from_seed(derive_seed(sc.seed(), &[POINTER_STREAM])), f.environment);
    let env_pointers: Vec<CVector> = (0..f.system).map(|i| frame.column(i).into_owned()).collect();

    let mut inputs = Vec::with_capacity(f.system);
    let mut outputs = Vec::with_capacity(f.system);
    for (i, phi) in env_pointers.iter().enumerate() {
        let o = sc.observable(i);
        inputs.push(o.kronecker(sc.apparatus_ready()).kronecker(&env_start));
        outputs.push(o.kronecker(sc.pointer(i)).kronecker(phi));
    }
    let unitary = super::builder::frames_to_unitary(&CMatrix::from_columns(&inputs), &CMatrix::from_columns(&outputs));

    let psi = input.amplitudes().kronecker(sc.apparatus_ready()).kronecker(&env_start);
    let out = PureState::normalized(&unitary * psi, f.joint())?;
    let apparatus = partial_trace(&out.density(), &[Factor::Apparatus])?;
    let definiteness = apparatus_definiteness(&apparatus, sc);
    Ok(ControlRun { unitary, env_start, env_pointers, apparatus, definiteness })
}

/// `|o_i⟩` of the scenario as a system-tagged pure state.
pub fn observable_state(sc: &MeasurementScenario, i: usize) -> Result<PureState> {
    let f = sc.factorization();
    if i >= f.system {
        return Err(Error::InvalidParameter(format!("outcome {i} out of range")));
    }
    PureState::new(sc.observable(i).clone(), f.space_of(&[Factor::System]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{c, unitary_deviation, HilbertFactorization, Space};

    fn sc() -> MeasurementScenario {
        MeasurementScenario::new(HilbertFactorization::new(2, 3, 4).unwrap(), 0, 2, 5).unwrap()
    }

    fn system_state(amps: [f64; 2]) -> PureState {
        let v = CVector::from_vec(vec![c(amps[0]), c(amps[1])]);
        PureState::normalized(v, Space::factor(Factor::System, 2)).unwrap()
    }

    #[test]
    fn eigenstate_gives_definite_pointer() {
        let run = von_neumann_control(&sc(), &system_state([1.0, 0.0])).unwrap();
        assert!((run.definiteness - 1.0).abs() < 1e-12);
        assert!(unitary_deviation(&run.unitary) < 1e-10);
    }

    #[test]
    fn equal_superposition_is_indefinite() {
        let run = von_neumann_control(&sc(), &system_state([1.0, 1.0])).unwrap();
        assert!((run.definiteness - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted_superposition() {
        let run = von_neumann_control(&sc(), &system_state([0.8f64.sqrt(), 0.2f64.sqrt()])).unwrap();
        assert!((run.definiteness - 0.8).abs() < 1e-12);
    }
}
