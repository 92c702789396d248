//! Fixtures shared by the benchmarks in `benches/`.

use unimeas_core::mechanism::build_perturbed_mechanism;
use unimeas_core::qcore::sample_state;
use unimeas_core::{DensityMatrix, Factor, HilbertFactorization, MeasurementScenario, OutcomeUnitary, Space};

/// Scenario with `d_A = d_S + 1`, `d_E = 8` and `D = 8 / d_S`, plus a calibrated mechanism.
pub struct Fixture {
    pub scenario: MeasurementScenario,
    pub mechanism: OutcomeUnitary,
    pub rho_s: DensityMatrix,
    pub rho_s_prime: DensityMatrix,
    pub rho_e: DensityMatrix,
}

impl Fixture {
    pub fn new(d_s: usize, delta: f64) -> Self {
        let fact = HilbertFactorization::new(d_s, d_s + 1, 8).expect("valid dimensions");
        let scenario = MeasurementScenario::randomized(fact, 0, 8 / d_s, 17).expect("feasible scenario");
        let mechanism = build_perturbed_mechanism(&scenario, delta).expect("calibrated mechanism");
        let system = |seed| {
            (seed..)
                .map(|s| sample_state(d_s, d_s, s).unwrap().with_space(Space::factor(Factor::System, d_s)).unwrap())
                .find(|rho| scenario.admissibility(rho).is_ok())
                .unwrap()
        };
        let rank = scenario.dominant_rank();
        let inner = sample_state(rank, rank, 3).unwrap();
        let rho_e = DensityMatrix::new(
            scenario.embed_dominant(inner.matrix()).unwrap(),
            Space::factor(Factor::Environment, 8),
        )
        .unwrap();
        Self { rho_s: system(1), rho_s_prime: system(2), rho_e, scenario, mechanism }
    }

    pub fn dim(&self) -> usize {
        self.scenario.factorization().dim()
    }
}
