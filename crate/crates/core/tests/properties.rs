use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use unimeas_core::ensemble::{averaged_final_environment, diamond_distance_unitary};
use unimeas_core::mechanism::{apply_mechanism, build_perturbed_mechanism};
use unimeas_core::qcore::{
    kron, partial_trace, sample_pure, sample_state, sample_unitary, trace_norm, CMatrix,
};
use unimeas_core::{
    baseline_report, gentle_check, DensityMatrix, EnvironmentEnsemble, Factor, HilbertFactorization,
    MeasurementScenario, MechanismEnsemble, Projector, Space,
};

const TOL: f64 = 1e-9;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

fn joint_state(fact: &HilbertFactorization, rank: usize, seed: u64) -> DensityMatrix {
    sample_state(fact.dim(), rank, seed).unwrap().with_space(fact.joint()).unwrap()
}

/// `ρ_S[s, s'] = Σ_{a,e} ρ[(s,a,e), (s',a,e)]` written out with the flat index.
fn reduce_to_system(rho: &CMatrix, fact: &HilbertFactorization) -> CMatrix {
    let mut out = CMatrix::zeros(fact.system, fact.system);
    for s in 0..fact.system {
        for t in 0..fact.system {
            for a in 0..fact.apparatus {
                for e in 0..fact.environment {
                    out[(s, t)] += rho[(fact.flat_index(s, a, e), fact.flat_index(t, a, e))];
                }
            }
        }
    }
    out
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn dominant_env(sc: &MeasurementScenario, rank: usize, seed: u64) -> DensityMatrix {
    let inner = sample_state(sc.dominant_rank(), rank.min(sc.dominant_rank()), seed).unwrap();
    let m = sc.embed_dominant(inner.matrix()).unwrap();
    DensityMatrix::new(m, Space::factor(Factor::Environment, sc.factorization().environment)).unwrap()
}

fn admissible(sc: &MeasurementScenario, rank: usize, seed: u64) -> DensityMatrix {
    let d = sc.factorization().system;
    (seed..)
        .map(|s| sample_state(d, rank, s).unwrap().with_space(Space::factor(Factor::System, d)).unwrap())
        .find(|rho| sc.admissibility(rho).is_ok())
        .unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn partial_trace_matches_index_sum_and_composes(
        d_s in 1usize..4, d_a in 1usize..4, d_e in 1usize..4, seed in any::<u64>(),
    ) {
        let fact = HilbertFactorization::bare(d_s, d_a, d_e).unwrap();
        let rho = joint_state(&fact, 1 + seed as usize % fact.dim(), seed);
        let direct = partial_trace(&rho, &[Factor::System]).unwrap();
        prop_assert!(max_diff(direct.matrix(), &reduce_to_system(rho.matrix(), &fact)) < 1e-12);
        let se = partial_trace(&rho, &[Factor::System, Factor::Environment]).unwrap();
        let two_step = partial_trace(&se, &[Factor::System]).unwrap();
        prop_assert!(max_diff(direct.matrix(), two_step.matrix()) < 1e-12);
        assert_abs_diff_eq!(direct.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_norm_axioms(d in 1usize..7, seed in any::<u64>(), scale in -3.0f64..3.0) {
        let x = sample_state(d, d, seed).unwrap().into_matrix() - sample_state(d, 1, seed ^ 1).unwrap().into_matrix();
        let y = sample_state(d, 1, seed ^ 2).unwrap().into_matrix() - sample_state(d, d, seed ^ 3).unwrap().into_matrix();
        let nx = trace_norm(&x).unwrap();
        let ny = trace_norm(&y).unwrap();
        prop_assert!((0.0..=2.0 + TOL).contains(&nx));
        prop_assert!(trace_norm(&(&x + &y)).unwrap() <= nx + ny + TOL);
        let scaled = &x * Complex64::new(scale, 0.0);
        assert_abs_diff_eq!(trace_norm(&scaled).unwrap(), scale.abs() * nx, epsilon = 1e-10);
        // non-Hermitian products take the singular value path
        let u = sample_unitary(d, seed ^ 4).unwrap();
        let v = sample_unitary(d, seed ^ 5).unwrap();
        assert_abs_diff_eq!(trace_norm(&(&u * &x * &v)).unwrap(), nx, epsilon = 1e-10);
    }

    #[test]
    fn pure_state_distance_closed_form(d in 2usize..9, seed in any::<u64>()) {
        let psi = sample_pure(d, seed).unwrap();
        let phi = sample_pure(d, seed ^ 7).unwrap();
        let overlap = psi.amplitudes().dotc(phi.amplitudes()).norm_sqr();
        let dist = trace_norm(&(psi.density().into_matrix() - phi.density().into_matrix())).unwrap();
        assert_abs_diff_eq!(dist, 2.0 * (1.0 - overlap).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn partial_trace_contracts(d_s in 1usize..4, d_e in 1usize..4, seed in any::<u64>()) {
        let fact = HilbertFactorization::bare(d_s, 2, d_e).unwrap();
        let rho = joint_state(&fact, fact.dim(), seed);
        let sigma = joint_state(&fact, 1, seed ^ 9);
        let full = trace_norm(&(rho.matrix() - sigma.matrix())).unwrap();
        for keep in [vec![Factor::System], vec![Factor::Environment], vec![Factor::System, Factor::Apparatus]] {
            let a = partial_trace(&rho, &keep).unwrap();
            let b = partial_trace(&sigma, &keep).unwrap();
            prop_assert!(trace_norm(&(a.matrix() - b.matrix())).unwrap() <= full + TOL);
        }
    }

    #[test]
    fn gentle_lemma_holds(d in 2usize..8, seed in any::<u64>(), rank_seed in any::<usize>()) {
        let rho = sample_state(d, 1 + rank_seed % d, seed).unwrap();
        let q = sample_unitary(d, seed ^ 11).unwrap();
        let r = 1 + (rank_seed / 7) % d;
        let cols: Vec<_> = (0..r).map(|i| q.column(i).into_owned()).collect();
        let p = Projector::from_orthonormal(&cols, d).unwrap();
        if p.weight(&rho) > 1e-6 {
            prop_assert!(gentle_check(&rho, &p).unwrap().holds());
        }
    }

    #[test]
    fn diamond_distance_is_a_metric(d in 1usize..7, seed in any::<u64>()) {
        let u = sample_unitary(d, seed).unwrap();
        let v = sample_unitary(d, seed ^ 1).unwrap();
        let w = sample_unitary(d, seed ^ 2).unwrap();
        let uv = diamond_distance_unitary(&u, &v).unwrap();
        prop_assert!((0.0..=2.0).contains(&uv));
        assert_abs_diff_eq!(uv, diamond_distance_unitary(&v, &u).unwrap(), epsilon = 1e-9);
        let uw = diamond_distance_unitary(&u, &w).unwrap();
        let wv = diamond_distance_unitary(&w, &v).unwrap();
        prop_assert!(uv <= uw + wv + TOL);
        // a common unitary applied before or after leaves the distance unchanged
        assert_abs_diff_eq!(diamond_distance_unitary(&(&w * &u), &(&w * &v)).unwrap(), uv, epsilon = 1e-9);
        assert_abs_diff_eq!(diamond_distance_unitary(&(&u * &w), &(&v * &w)).unwrap(), uv, epsilon = 1e-9);
    }

    #[test]
    fn diamond_dominates_output_distance(d in 2usize..6, seed in any::<u64>()) {
        let u = sample_unitary(d, seed).unwrap();
        let v = sample_unitary(d, seed ^ 3).unwrap();
        let rho = sample_state(d, 1 + seed as usize % d, seed ^ 4).unwrap();
        let out = trace_norm(&(&u * rho.matrix() * u.adjoint() - &v * rho.matrix() * v.adjoint())).unwrap();
        prop_assert!(out <= diamond_distance_unitary(&u, &v).unwrap() + TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn baseline_bound_holds_on_dominant_environments(
        d_s in 2usize..4, delta in 0.0f64..0.2, seed in any::<u64>(),
    ) {
        let d_e = 2 * d_s;
        let fact = HilbertFactorization::new(d_s, d_s + 1, d_e).unwrap();
        let sc = MeasurementScenario::randomized(fact, seed as usize % d_s, d_e / d_s, seed).unwrap();
        let u = build_perturbed_mechanism(&sc, delta).unwrap();
        let rho_s = admissible(&sc, 1 + seed as usize % d_s, seed ^ 1);
        let rho_s_prime = admissible(&sc, d_s, seed ^ 2);
        let rho_e = dominant_env(&sc, 1 + seed as usize % 2, seed ^ 3);
        let report = baseline_report(&u, &rho_s, &rho_s_prime, &rho_e, &sc).unwrap();
        prop_assert!(report.holds(), "slack {}", report.slack);
        prop_assert!(report.is_asserted());
    }

    #[test]
    fn averaging_is_affine_in_environment_weights(w in 0.0f64..1.0, seed in any::<u64>()) {
        let fact = HilbertFactorization::new(2, 3, 4).unwrap();
        let sc = MeasurementScenario::randomized(fact, 1, 2, seed).unwrap();
        let u = build_perturbed_mechanism(&sc, 0.01).unwrap();
        let mech = MechanismEnsemble::singleton(u.clone());
        let rho_s = admissible(&sc, 2, seed ^ 1);
        let e1 = dominant_env(&sc, 2, seed ^ 2);
        let e2 = dominant_env(&sc, 1, seed ^ 3);
        let mixed = EnvironmentEnsemble::new(vec![e1.clone(), e2.clone()], vec![w, 1.0 - w]).unwrap();
        let averaged = averaged_final_environment(&mech, &mixed, &rho_s, &sc).unwrap();
        let f1 = apply_mechanism(&u, &rho_s, &e1, &sc).unwrap().environment;
        let f2 = apply_mechanism(&u, &rho_s, &e2, &sc).unwrap().environment;
        let expected = f1.matrix() * Complex64::new(w, 0.0) + f2.matrix() * Complex64::new(1.0 - w, 0.0);
        prop_assert!(max_diff(averaged.matrix(), &expected) < 1e-12);
    }

    #[test]
    fn exact_mechanism_preserves_distinguishability(seed in any::<u64>()) {
        let fact = HilbertFactorization::new(2, 3, 8).unwrap();
        let sc = MeasurementScenario::randomized(fact, 0, 4, seed).unwrap();
        let u = build_perturbed_mechanism(&sc, 0.0).unwrap();
        let rho_s = admissible(&sc, 2, seed ^ 1);
        let rho_s_prime = admissible(&sc, 1, seed ^ 2);
        let rho_e = dominant_env(&sc, 3, seed ^ 3);
        let a = apply_mechanism(&u, &rho_s, &rho_e, &sc).unwrap();
        let b = apply_mechanism(&u, &rho_s_prime, &rho_e, &sc).unwrap();
        let env = trace_norm(&(a.environment.matrix() - b.environment.matrix())).unwrap();
        let sys = trace_norm(&(rho_s.matrix() - rho_s_prime.matrix())).unwrap();
        assert_abs_diff_eq!(env, sys, epsilon = 1e-9);
    }
}

#[test]
fn product_states_reduce_to_factors() {
    let fact = HilbertFactorization::bare(2, 3, 2).unwrap();
    let s = sample_state(2, 2, 1).unwrap();
    let a = sample_state(3, 1, 2).unwrap();
    let e = sample_state(2, 2, 3).unwrap();
    let joint = kron(&kron(s.matrix(), a.matrix()), e.matrix());
    let rho = DensityMatrix::new(joint, fact.joint()).unwrap();
    for (factor, expected) in [(Factor::System, &s), (Factor::Apparatus, &a), (Factor::Environment, &e)] {
        let reduced = partial_trace(&rho, &[factor]).unwrap();
        assert!(max_diff(reduced.matrix(), expected.matrix()) < 1e-12);
    }
}
