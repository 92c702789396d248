use nalgebra::QR;
use rand::Rng;

use super::MeasurementScenario;
use crate::error::{Error, Result};
use crate::qcore::{
    c, derive_seed, haar_unitary, hermitian_eigen, kron, outer, rng_from_seed, unitary_deviation,
    CMatrix, CVector, SeededRng, STRUCTURAL_TOL,
};

const IMAGE_STREAM: u64 = 0x1_0A6E;
const SCRAMBLE_STREAM: u64 = 0x5C_4A3B;
const PERTURB_STREAM: u64 = 0x9E47;

/// Maximum bisection steps when calibrating the perturbation angle.
pub const CALIBRATION_STEPS: usize = 200;
/// Required agreement between the calibrated worst-case residual and the target.
pub const CALIBRATION_TOL: f64 = 1e-6;

/// How the environment images `|ẽ_{i,k}⟩` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageFamily {
    /// Leading columns of a seeded Haar unitary on the environment.
    #[default]
    Haar,
    /// `|ẽ_{i,k}⟩ = |i·D + k⟩`.
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MechanismOptions {
    pub images: ImageFamily,
    /// Mix the completion columns with a seeded Haar unitary on the complement.
    pub scramble_complement: bool,
}

/// The small rotation applied on top of an exact mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Outcome index `φ ≠ θ` whose system state absorbs the leaked weight.
    pub partner: usize,
    pub angle: f64,
    /// Environment unitary pairing `|o_θ a_θ⟩ ⊗ |e⟩` with `|o_φ a_θ⟩ ⊗ V|e⟩`.
    pub twist: CMatrix,
}

/// A unitary on `S ⊗ A ⊗ E` realizing the mechanism for one outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeUnitary {
    matrix: CMatrix,
    outcome: usize,
    dominant_rank: usize,
    delta_target: f64,
    calibrated_delta: f64,
    /// `|ẽ_{i,k}⟩` stored at index `i·D + k`.
    env_images: Vec<CVector>,
    /// `U · (I_S ⊗ |a_0⟩ ⊗ I_E)`: the only columns that act on ready-state inputs.
    ready_block: CMatrix,
    perturbation: Option<Perturbation>,
}

impl OutcomeUnitary {
    fn assemble(
        matrix: CMatrix,
        sc: &MeasurementScenario,
        delta_target: f64,
        calibrated_delta: f64,
        env_images: Vec<CVector>,
        perturbation: Option<Perturbation>,
    ) -> Self {
        let ready_block = &matrix * sc.ready_embedding();
        Self {
            matrix,
            outcome: sc.outcome(),
            dominant_rank: sc.dominant_rank(),
            delta_target,
            calibrated_delta,
            env_images,
            ready_block,
            perturbation,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn delta_target(&self) -> f64 {
        self.delta_target
    }

    /// Worst residual over dominant basis inputs actually achieved.
    pub fn calibrated_delta(&self) -> f64 {
        self.calibrated_delta
    }

    pub fn env_images(&self) -> &[CVector] {
        &self.env_images
    }

    /// `|ẽ_{i,k}⟩`
    pub fn image(&self, i: usize, k: usize) -> &CVector {
        &self.env_images[i * self.dominant_rank + k]
    }

    pub fn ready_block(&self) -> &CMatrix {
        &self.ready_block
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    pub fn unitarity_error(&self) -> f64 {
        unitary_deviation(&self.matrix)
    }

    /// Follows the mechanism with `I_SA ⊗ X` for a near-identity environment
    /// unitary `X = exp(i·scale·H)`, `H` a seeded Hermitian of unit spectral norm.
    ///
    /// The system and apparatus marginals are untouched, so the calibrated
    /// residual carries over; the environment images become `X|ẽ_{i,k}⟩`.
    pub fn jittered(&self, sc: &MeasurementScenario, scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("jitter scale {scale} must be >= 0")));
        }
        let x = environment_jitter(sc.factorization().environment, scale, &mut rng_from_seed(seed));
        let f = sc.factorization();
        let sa = f.system * f.apparatus;
        let lift = kron(&CMatrix::identity(sa, sa), &x);
        let matrix = &lift * &self.matrix;
        let env_images = self.env_images.iter().map(|e| &x * e).collect();
        Ok(Self::assemble(
            matrix,
            sc,
            self.delta_target,
            self.calibrated_delta,
            env_images,
            self.perturbation.clone(),
        ))
    }
}

fn environment_jitter(dim: usize, scale: f64, rng: &mut SeededRng) -> CMatrix {
    let g = crate::qcore::ginibre(rng, dim, dim);
    let h = (&g + g.adjoint()) * c(0.5);
    let (vals, vecs) = hermitian_eigen(&h);
    let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(dim, dim);
    for (val, v) in vals.iter().zip(&vecs) {
        let phase = num_complex::Complex64::from_polar(1.0, scale * val / norm);
        x += outer(v, v) * phase;
    }
    x
}

/// Extends orthonormal columns `frame` (d×m) to a full unitary whose first m
/// columns are exactly `frame`.
fn complete_frame(frame: &CMatrix) -> CMatrix {
    let d = frame.nrows();
    let m = frame.ncols();
    let qr = QR::new(frame.clone());
    let mut qh = CMatrix::identity(d, d);
    qr.q_tr_mul(&mut qh);
    let mut full = qh.adjoint();
    // Householder Q reproduces the frame up to column phases; keep the frame itself.
    for j in 0..m {
        full.set_column(j, &frame.column(j));
    }
    full
}

/// Unitary sending column j of `inputs` to column j of `outputs` for the
/// first m columns, completed deterministically on the complement.
fn unitary_from_frames(inputs: &CMatrix, outputs: &CMatrix, scramble: Option<&mut SeededRng>) -> CMatrix {
    let m = inputs.ncols();
    let d = inputs.nrows();
    let x = complete_frame(inputs);
    let mut y = complete_frame(outputs);
    if let Some(rng) = scramble {
        if d > m {
            let w = haar_unitary(rng, d - m);
            let tail = y.columns(m, d - m) * w;
            y.columns_mut(m, d - m).copy_from(&tail);
        }
    }
    y * x.adjoint()
}

pub(super) fn frames_to_unitary(inputs: &CMatrix, outputs: &CMatrix) -> CMatrix {
    unitary_from_frames(inputs, outputs, None)
}

pub fn build_exact_mechanism(sc: &MeasurementScenario) -> Result<OutcomeUnitary> {
    build_exact_mechanism_with(sc, MechanismOptions::default())
}

/// Builds `U` with `U|o_i⟩|a_0⟩|e_k⟩ = |o_θ⟩|a_θ⟩|ẽ_{i,k}⟩` for all `i < d_S`, `k < D`.
pub fn build_exact_mechanism_with(sc: &MeasurementScenario, opts: MechanismOptions) -> Result<OutcomeUnitary> {
    let f = sc.factorization();
    let rank = sc.dominant_rank();
    let count = f.system * rank;
    if count > f.environment {
        return Err(Error::InfeasibleConstruction { required: count, available: f.environment });
    }
    let env_images: Vec<CVector> = match opts.images {
        ImageFamily::Haar => {
            let mut rng = rng_from_seed(derive_seed(sc.seed(), &[IMAGE_STREAM]));
            let u = haar_unitary(&mut rng, f.environment);
            (0..count).map(|j| u.column(j).into_owned()).collect()
        }
        ImageFamily::Canonical => (0..count).map(|j| crate::qcore::basis_vector(f.environment, j)).collect(),
    };
    let target = sc.outcome_sa_vector();
    let mut inputs = Vec::with_capacity(count);
    let mut outputs = Vec::with_capacity(count);
    for i in 0..f.system {
        for k in 0..rank {
            inputs.push(sc.dominant_input(i, k));
            outputs.push(target.kronecker(&env_images[i * rank + k]));
        }
    }
    let mut scramble_rng = rng_from_seed(derive_seed(sc.seed(), &[SCRAMBLE_STREAM]));
    let matrix = unitary_from_frames(
        &CMatrix::from_columns(&inputs),
        &CMatrix::from_columns(&outputs),
        opts.scramble_complement.then_some(&mut scramble_rng),
    );
    Ok(OutcomeUnitary::assemble(matrix, sc, 0.0, 0.0, env_images, None))
}

/// Exact mechanism followed by a calibrated leak of weight `delta` from
/// `|o_θ⟩` into a partner outcome, with the apparatus left on `|a_θ⟩`.
pub fn build_perturbed_mechanism(sc: &MeasurementScenario, delta: f64) -> Result<OutcomeUnitary> {
    let base = build_exact_mechanism(sc)?;
    perturb_mechanism(&base, sc, delta, derive_seed(sc.seed(), &[PERTURB_STREAM]))
}

/// Applies a seeded, calibrated rotation to `base`.
///
/// The rotation acts on `span{|o_θ a_θ⟩, |o_φ a_θ⟩} ⊗ H_E` as
/// `|o_θ a_θ e⟩ ↦ cos t |o_θ a_θ e⟩ + sin t |o_φ a_θ⟩ V|e⟩`, and `t` is found by
/// bisection so that the worst dominant basis input keeps overlap `1 − delta`
/// with `|o_θ⟩`.
pub fn perturb_mechanism(
    base: &OutcomeUnitary,
    sc: &MeasurementScenario,
    delta: f64,
    seed: u64,
) -> Result<OutcomeUnitary> {
    if !(0.0..0.25).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside [0, 0.25)")));
    }
    if delta == 0.0 {
        return Ok(base.clone());
    }
    let f = sc.factorization();
    if f.system < 2 {
        return Err(Error::InvalidScenario("a perturbation needs a second outcome".into()));
    }
    let theta = sc.outcome();
    let mut rng = rng_from_seed(seed);
    let mut partner = rng.random_range(0..f.system - 1);
    if partner >= theta {
        partner += 1;
    }
    let twist = haar_unitary(&mut rng, f.environment);

    let sa_theta = sc.outcome_sa_vector();
    let sa_partner = sc.observable(partner).kronecker(sc.pointer(theta));
    let profiles = leak_profiles(base, sc, &sa_theta, &sa_partner, &twist);
    let worst = |t: f64| profiles.iter().map(|p| p.residual(t)).fold(f64::NEG_INFINITY, f64::max);

    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    if worst(hi) < delta {
        return Err(Error::CalibrationFailed { steps: 0, residual: worst(hi) });
    }
    let mut angle = 0.5 * (lo + hi);
    let mut steps = 0;
    while steps < CALIBRATION_STEPS {
        angle = 0.5 * (lo + hi);
        let gap = worst(angle) - delta;
        steps += 1;
        if gap.abs() <= 1e-15 || hi - lo <= f64::EPSILON {
            break;
        }
        if gap > 0.0 {
            hi = angle;
        } else {
            lo = angle;
        }
    }
    let achieved = worst(angle);
    if (achieved - delta).abs() > CALIBRATION_TOL {
        return Err(Error::CalibrationFailed { steps, residual: achieved });
    }

    let rotation = leak_rotation(f.environment, &sa_theta, &sa_partner, &twist, angle);
    let matrix = rotation * base.matrix();
    let dev = unitary_deviation(&matrix);
    if dev > STRUCTURAL_TOL {
        return Err(Error::NotUnitary(dev));
    }
    let perturbation = Perturbation { partner, angle, twist };
    Ok(OutcomeUnitary::assemble(
        matrix,
        sc,
        delta,
        achieved.max(base.calibrated_delta),
        base.env_images.clone(),
        Some(perturbation),
    ))
}

/// `R(t) = I + (cos t − 1)(P_θ + P_φ) ⊗ I + sin t (|φ⟩⟨θ| ⊗ V − |θ⟩⟨φ| ⊗ V†)`.
fn leak_rotation(env: usize, theta: &CVector, partner: &CVector, twist: &CMatrix, angle: f64) -> CMatrix {
    let id_e = CMatrix::identity(env, env);
    let d = theta.len() * env;
    let (s, co) = angle.sin_cos();
    let diag = kron(&(outer(theta, theta) + outer(partner, partner)), &id_e) * c(co - 1.0);
    let off = kron(&outer(partner, theta), twist) - kron(&outer(theta, partner), &twist.adjoint());
    CMatrix::identity(d, d) + diag + off * c(s)
}

/// Components of one rotated output that determine its residual as a function of the angle.
struct LeakProfile {
    on_theta: CVector,
    on_partner: CVector,
    /// Weight on `|o_θ⟩` with the apparatus orthogonal to `|a_θ⟩` (rotation-invariant).
    other_theta_weight: f64,
}

impl LeakProfile {
    fn residual(&self, t: f64) -> f64 {
        let (s, co) = t.sin_cos();
        let kept = &self.on_theta * c(co) - &self.on_partner * c(s);
        1.0 - (kept.norm_squared() + self.other_theta_weight)
    }
}

fn leak_profiles(
    base: &OutcomeUnitary,
    sc: &MeasurementScenario,
    sa_theta: &CVector,
    sa_partner: &CVector,
    twist: &CMatrix,
) -> Vec<LeakProfile> {
    let f = sc.factorization();
    let env = f.environment;
    let o_theta = sc.observable(sc.outcome());
    let twist_h = twist.adjoint();
    let mut out = Vec::new();
    for i in 0..f.system {
        for k in 0..sc.dominant_rank() {
            let u = base.matrix() * sc.dominant_input(i, k);
            let on_theta = contract_leading(&u, sa_theta, env);
            let on_partner = &twist_h * contract_leading(&u, sa_partner, env);
            let theta_total = contract_leading(&u, o_theta, f.apparatus * env).norm_squared();
            out.push(LeakProfile {
                other_theta_weight: theta_total - on_theta.norm_squared(),
                on_theta,
                on_partner,
            });
        }
    }
    out
}

/// `(⟨v| ⊗ I)|u⟩` where `v` lives on the leading `v.len()` indices.
fn contract_leading(u: &CVector, v: &CVector, rest: usize) -> CVector {
    let mut out = CVector::zeros(rest);
    for (j, vj) in v.iter().enumerate() {
        let conj = vj.conj();
        for r in 0..rest {
            out[r] += conj * u[j * rest + r];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{max_abs, HilbertFactorization};

    fn scenario(d_s: usize, d_e: usize, rank: usize, theta: usize, seed: u64) -> MeasurementScenario {
        let fact = HilbertFactorization::new(d_s, d_s + 1, d_e).unwrap();
        MeasurementScenario::new(fact, theta, rank, seed).unwrap()
    }

    #[test]
    fn exact_mechanism_maps_basis_inputs() {
        let sc = scenario(2, 4, 2, 1, 3);
        let u = build_exact_mechanism(&sc).unwrap();
        assert!(u.unitarity_error() < 1e-10);
        let target = sc.outcome_sa_vector();
        for i in 0..2 {
            for k in 0..2 {
                let out = u.matrix() * sc.dominant_input(i, k);
                let expect = target.kronecker(u.image(i, k));
                assert!((out - expect).norm() < 1e-12);
            }
        }
        let out = u.matrix() * sc.dominant_input(1, 0);
        let overlap = contract_leading(&out, &target, 4).norm_squared();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_completion_keeps_columns() {
        let sc = scenario(3, 7, 2, 0, 8);
        for opts in [
            MechanismOptions::default(),
            MechanismOptions { images: ImageFamily::Canonical, scramble_complement: true },
        ] {
            let u = build_exact_mechanism_with(&sc, opts).unwrap();
            assert!(u.unitarity_error() < 1e-10);
            let gram = CMatrix::from_columns(u.env_images());
            assert!(max_abs(&(gram.adjoint() * &gram - CMatrix::identity(6, 6))) < 1e-12);
        }
    }

    #[test]
    fn exact_build_is_deterministic() {
        let sc = scenario(2, 6, 3, 0, 12);
        assert_eq!(build_exact_mechanism(&sc).unwrap(), build_exact_mechanism(&sc).unwrap());
    }

    #[test]
    fn zero_delta_is_exact() {
        let sc = scenario(2, 4, 2, 0, 1);
        assert_eq!(build_perturbed_mechanism(&sc, 0.0).unwrap(), build_exact_mechanism(&sc).unwrap());
    }

    #[test]
    fn calibration_matches_closed_form_angle() {
        // For an exact base every dominant output sits on |o_θ a_θ⟩, so the
        // residual is sin²t and the bisection must land on asin(√δ).
        let sc = scenario(3, 9, 3, 2, 4);
        for delta in [1e-4, 0.01, 0.04, 0.2] {
            let u = build_perturbed_mechanism(&sc, delta).unwrap();
            let p = u.perturbation().unwrap();
            assert!((p.angle - delta.sqrt().asin()).abs() < 1e-9);
            assert!((u.calibrated_delta() - delta).abs() < 1e-12);
            assert!(u.unitarity_error() < 1e-10);
            assert_ne!(p.partner, 2);
        }
    }

    #[test]
    fn delta_range_enforced() {
        let sc = scenario(2, 4, 2, 0, 1);
        assert!(build_perturbed_mechanism(&sc, 0.25).is_err());
        assert!(build_perturbed_mechanism(&sc, -0.1).is_err());
    }

    #[test]
    fn infeasible_construction() {
        let fact = HilbertFactorization::new(2, 3, 4).unwrap();
        let sc = MeasurementScenario::new(fact, 0, 2, 0).unwrap();
        assert!(build_exact_mechanism(&sc).is_ok());
        assert!(matches!(
            MeasurementScenario::new(fact, 0, 3, 0),
            Err(Error::InfeasibleConstruction { required: 6, available: 4 })
        ));
    }

    #[test]
    fn jitter_keeps_unitarity_and_images() {
        let sc = scenario(2, 6, 3, 0, 2);
        let u = build_perturbed_mechanism(&sc, 0.01).unwrap();
        let j = u.jittered(&sc, 0.05, 77).unwrap();
        assert!(j.unitarity_error() < 1e-10);
        assert_eq!(j.calibrated_delta(), u.calibrated_delta());
        let zero = u.jittered(&sc, 0.0, 77).unwrap();
        assert!(max_abs(&(zero.matrix() - u.matrix())) < 1e-12);
    }
}
