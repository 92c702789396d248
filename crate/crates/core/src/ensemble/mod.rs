//! Run-to-run fluctuation of mechanisms and initial environments, and the
//! noise-included dependence bound
//!
//! ```text
//! ‖ρ̄_E(ρ_S) − ρ̄_E(ρ_S')‖₁ ≥ ‖ρ_S − ρ_S'‖₁ − 8√δ − 2(η + γ)
//! ```

mod diamond;

pub use diamond::{
    channel_eigenvalues, convex_hull, diamond_distance_unitary, diamond_lower_bound, hull_diamond_value,
    hull_distance_from_origin, DiamondSearch, UNITARY_TOL,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::bounds::{BoundReport, BoundStep, Regime, Relation, TAIL_TOL};
use crate::error::{Error, Result};
use crate::mechanism::{final_environment, MeasurementScenario, OutcomeUnitary};
use crate::qcore::{c, derive_seed, rng_from_seed, trace_norm, CMatrix, DensityMatrix, Space};

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest `|mechanisms|·|environments|` averaged exactly; larger grids are sampled.
pub const EXACT_AVERAGING_LIMIT: usize = 10_000;

/// Number of `(l, m)` draws when averaging is sampled.
pub const AVERAGING_SAMPLES: usize = 10_000;

const AVERAGING_STREAM: u64 = 0xA7E5;

fn check_weights(weights: &[f64], count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if weights.len() != count {
        return Err(Error::InvalidWeights(format!("{} weights for {count} members", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

fn uniform_weights(count: usize) -> Vec<f64> {
    vec![1.0 / count as f64; count]
}

/// Common access for [`central_member`].
pub trait Ensemble {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight(&self, index: usize) -> f64;

    fn distance(&self, i: usize, j: usize) -> Result<f64>;
}

/// Mechanisms `U_l` for one outcome with frequencies `w_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismEnsemble {
    members: Vec<OutcomeUnitary>,
    weights: Vec<f64>,
}

impl MechanismEnsemble {
    pub fn new(members: Vec<OutcomeUnitary>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, members.len())?;
        let first = &members[0];
        for m in &members[1..] {
            if m.outcome() != first.outcome() {
                return Err(Error::InvalidScenario("ensemble members disagree on the outcome".into()));
            }
            if m.matrix().nrows() != first.matrix().nrows() {
                return Err(Error::DimensionMismatch {
                    expected: first.matrix().nrows(),
                    found: m.matrix().nrows(),
                });
            }
        }
        Ok(Self { members, weights })
    }

    pub fn uniform(members: Vec<OutcomeUnitary>) -> Result<Self> {
        let weights = uniform_weights(members.len());
        Self::new(members, weights)
    }

    pub fn singleton(member: OutcomeUnitary) -> Self {
        Self { members: vec![member], weights: vec![1.0] }
    }

    pub fn members(&self) -> &[OutcomeUnitary] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest calibrated residual over the members.
    pub fn max_delta(&self) -> f64 {
        self.members.iter().map(OutcomeUnitary::calibrated_delta).fold(0.0, f64::max)
    }
}

impl Ensemble for MechanismEnsemble {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    fn distance(&self, i: usize, j: usize) -> Result<f64> {
        diamond_distance_unitary(self.members[i].matrix(), self.members[j].matrix())
    }
}

/// Initial environments `ρ_E^(m)` with frequencies `v_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentEnsemble {
    members: Vec<DensityMatrix>,
    weights: Vec<f64>,
}

impl EnvironmentEnsemble {
    pub fn new(members: Vec<DensityMatrix>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, members.len())?;
        let dim = members[0].dim();
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
        }
        Ok(Self { members, weights })
    }

    pub fn uniform(members: Vec<DensityMatrix>) -> Result<Self> {
        let weights = uniform_weights(members.len());
        Self::new(members, weights)
    }

    pub fn singleton(member: DensityMatrix) -> Self {
        Self { members: vec![member], weights: vec![1.0] }
    }

    pub fn members(&self) -> &[DensityMatrix] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_m v_m ρ_E^(m)`; a singleton is returned unchanged.
    pub fn mean(&self) -> DensityMatrix {
        if self.members.len() == 1 {
            return self.members[0].clone();
        }
        let d = self.members[0].dim();
        let mut m = CMatrix::zeros(d, d);
        for (w, rho) in self.weights.iter().zip(&self.members) {
            m += rho.matrix() * c(*w);
        }
        DensityMatrix::from_evolved(m, self.members[0].space().clone())
    }
}

impl Ensemble for EnvironmentEnsemble {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    fn distance(&self, i: usize, j: usize) -> Result<f64> {
        trace_norm(&(self.members[i].matrix() - self.members[j].matrix()))
    }
}

/// Member `j` minimizing `Σ_l w_l·dist(l, j)` and that minimum.
///
/// The spread is `γ` for mechanisms (diamond distance) and `η` for
/// environments (trace distance). Only members are candidates; ties go to the
/// lowest index.
pub fn central_member<E: Ensemble + ?Sized>(ens: &E) -> Result<(usize, f64)> {
    let n = ens.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mut dist = vec![vec![0.0; n]; n];
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for j in i + 1..n {
            let d = ens.distance(i, j)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut best = (0, f64::INFINITY);
    for (j, row) in dist.iter().enumerate() {
        let spread: f64 = (0..n).map(|l| ens.weight(l) * row[l]).sum();
        if spread < best.1 {
            best = (j, spread);
        }
    }
    Ok(best)
}

/// `δ`, `η`, `γ` entering the noise-included bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
}

impl NoiseBudget {
    pub fn new(delta: f64, eta: f64, gamma: f64) -> Result<Self> {
        for (name, x) in [("delta", delta), ("eta", eta), ("gamma", gamma)] {
            if !(0.0..=2.0).contains(&x) {
                return Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 2]")));
            }
        }
        Ok(Self { delta, eta, gamma })
    }

    /// `δ` from the largest member residual, `η` and `γ` from the central members.
    pub fn from_ensembles(mech: &MechanismEnsemble, env: &EnvironmentEnsemble) -> Result<Self> {
        let (_, gamma) = central_member(mech)?;
        let (_, eta) = central_member(env)?;
        Self::new(mech.max_delta(), eta, gamma)
    }

    /// `8√δ + 2(η + γ)`
    pub fn penalty(&self) -> f64 {
        8.0 * self.delta.sqrt() + 2.0 * (self.eta + self.gamma)
    }
}

/// How [`averaged_final_environment`] evaluates the double sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Exact,
    Sampled { samples: usize, seed: u64 },
}

pub fn averaging_plan(mech: &MechanismEnsemble, env: &EnvironmentEnsemble, sc: &MeasurementScenario) -> Averaging {
    if mech.len() * env.len() <= EXACT_AVERAGING_LIMIT {
        Averaging::Exact
    } else {
        Averaging::Sampled { samples: AVERAGING_SAMPLES, seed: derive_seed(sc.seed(), &[AVERAGING_STREAM]) }
    }
}

fn weighted_sum(weights: &[f64], states: &[DensityMatrix]) -> DensityMatrix {
    let mut acc = states[0].matrix() * c(weights[0]);
    for (w, s) in weights.iter().zip(states).skip(1) {
        acc += s.matrix() * c(*w);
    }
    DensityMatrix::from_evolved(acc, states[0].space().clone())
}

/// `ρ̄_E(ρ_S) = Σ_{l,m} w_l v_m tr_SA(U_l (ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E^(m)) U_l†)`.
///
/// The exact sum uses linearity in the environment: each mechanism is applied
/// once to `Σ_m v_m ρ_E^(m)`. Mechanisms are evaluated in parallel and reduced
/// in index order. Above [`EXACT_AVERAGING_LIMIT`] pairs, `(l, m)` is drawn
/// [`AVERAGING_SAMPLES`] times from `w ⊗ v` instead (see [`averaging_plan`]).
pub fn averaged_final_environment(
    mech: &MechanismEnsemble,
    env: &EnvironmentEnsemble,
    rho_s: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<DensityMatrix> {
    sc.admissibility(rho_s)?;
    match averaging_plan(mech, env, sc) {
        Averaging::Exact => {
            let mean_env = env.mean();
            let outputs = mech
                .members
                .par_iter()
                .map(|u| final_environment(u, rho_s, &mean_env, sc))
                .collect::<Result<Vec<_>>>()?;
            Ok(weighted_sum(&mech.weights, &outputs))
        }
        Averaging::Sampled { samples, seed } => {
            let mut rng = rng_from_seed(seed);
            let pick_l = WeightedIndex::new(&mech.weights).map_err(|e| Error::InvalidWeights(e.to_string()))?;
            let pick_m = WeightedIndex::new(&env.weights).map_err(|e| Error::InvalidWeights(e.to_string()))?;
            let mut counts = std::collections::BTreeMap::<(usize, usize), usize>::new();
            for _ in 0..samples {
                *counts.entry((pick_l.sample(&mut rng), pick_m.sample(&mut rng))).or_default() += 1;
            }
            let pairs: Vec<_> = counts.into_iter().collect();
            let outputs = pairs
                .par_iter()
                .map(|((l, m), _)| final_environment(&mech.members[*l], rho_s, &env.members[*m], sc))
                .collect::<Result<Vec<_>>>()?;
            let weights: Vec<f64> = pairs.iter().map(|(_, n)| *n as f64 / samples as f64).collect();
            Ok(weighted_sum(&weights, &outputs))
        }
    }
}

/// Every `ρ_E^{l,m}(ρ_S)`, indexed `[l][m]`.
fn final_grid(
    mech: &MechanismEnsemble,
    env: &EnvironmentEnsemble,
    rho_s: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<Vec<Vec<DensityMatrix>>> {
    mech.members
        .par_iter()
        .map(|u| env.members.iter().map(|e| final_environment(u, rho_s, e, sc)).collect())
        .collect()
}

struct AveragingSteps {
    deviation: f64,
    convex_sum: f64,
    split_sum: f64,
    env_sum: f64,
    mech_sum: f64,
}

fn averaging_steps(
    mech: &MechanismEnsemble,
    env: &EnvironmentEnsemble,
    grid: &[Vec<DensityMatrix>],
    averaged: &DensityMatrix,
    center: (usize, usize),
) -> Result<AveragingSteps> {
    let (j, k) = center;
    let r00 = grid[j][k].matrix();
    let mut steps = AveragingSteps {
        deviation: trace_norm(&(averaged.matrix() - r00))?,
        convex_sum: 0.0,
        split_sum: 0.0,
        env_sum: 0.0,
        mech_sum: 0.0,
    };
    for (l, row) in grid.iter().enumerate() {
        let wl = mech.weights[l];
        let rl0 = row[k].matrix();
        let to_center = trace_norm(&(r00 - rl0))?;
        steps.mech_sum += wl * to_center;
        for (m, rlm) in row.iter().enumerate() {
            let wv = wl * env.weights[m];
            let env_part = trace_norm(&(rlm.matrix() - rl0))?;
            steps.convex_sum += wv * trace_norm(&(rlm.matrix() - r00))?;
            steps.split_sum += wv * (env_part + to_center);
            steps.env_sum += wv * env_part;
        }
    }
    Ok(steps)
}

fn worse(a: BoundStep, b: BoundStep) -> BoundStep {
    if b.margin() < a.margin() {
        b
    } else {
        a
    }
}

/// Noise-included dependence bound with the intermediate steps of its derivation.
///
/// Steps, each recorded for the worse of `ρ_S` and `ρ_S'`:
///
/// * `triangle`: `lhs ≥ ‖ρ^{00} − ρ'^{00}‖₁ − ‖ρ̄ − ρ^{00}‖₁ − ‖ρ̄' − ρ'^{00}‖₁`
/// * `convexity`: `‖ρ̄ − ρ^{00}‖₁ ≤ Σ w_l v_m ‖ρ^{lm} − ρ^{00}‖₁`
/// * `split`: `Σ w_l v_m ‖ρ^{lm} − ρ^{00}‖₁ ≤ Σ w_l v_m (‖ρ^{lm} − ρ^{l0}‖₁ + ‖ρ^{00} − ρ^{l0}‖₁)`
/// * `environment`: `Σ w_l v_m ‖ρ^{lm} − ρ^{l0}‖₁ ≤ η`
/// * `diamond`: `Σ w_l ‖ρ^{00} − ρ^{l0}‖₁ ≤ γ`
/// * `averaging`: `‖ρ̄ − ρ^{00}‖₁ ≤ η + γ`
/// * `center`: `‖ρ^{00} − ρ'^{00}‖₁ ≥ ‖ρ_S − ρ_S'‖₁ − 8√δ`
///
/// Index `0` denotes the central members. `δ` is the largest calibrated
/// residual over the mechanism ensemble.
pub fn noisy_report(
    mech: &MechanismEnsemble,
    env: &EnvironmentEnsemble,
    rho_s: &DensityMatrix,
    rho_s_prime: &DensityMatrix,
    sc: &MeasurementScenario,
) -> Result<BoundReport> {
    let (j, gamma) = central_member(mech)?;
    let (k, eta) = central_member(env)?;
    let delta = mech.max_delta();
    let averaged = averaged_final_environment(mech, env, rho_s, sc)?;
    let averaged_prime = averaged_final_environment(mech, env, rho_s_prime, sc)?;
    let system_distance = trace_norm(&(rho_s.matrix() - rho_s_prime.matrix()))?;
    let lhs = trace_norm(&(averaged.matrix() - averaged_prime.matrix()))?;
    let rhs = system_distance - 8.0 * delta.sqrt() - 2.0 * (eta + gamma);

    let grid = final_grid(mech, env, rho_s, sc)?;
    let grid_prime = final_grid(mech, env, rho_s_prime, sc)?;
    let first = averaging_steps(mech, env, &grid, &averaged, (j, k))?;
    let second = averaging_steps(mech, env, &grid_prime, &averaged_prime, (j, k))?;
    let center_distance = trace_norm(&(grid[j][k].matrix() - grid_prime[j][k].matrix()))?;

    let per_run = |s: &AveragingSteps| {
        [
            BoundStep::new("convexity", s.deviation, s.convex_sum, Relation::AtMost),
            BoundStep::new("split", s.convex_sum, s.split_sum, Relation::AtMost),
            BoundStep::new("environment", s.env_sum, eta, Relation::AtMost),
            BoundStep::new("diamond", s.mech_sum, gamma, Relation::AtMost),
            BoundStep::new("averaging", s.deviation, eta + gamma, Relation::AtMost),
        ]
    };
    let mut steps = vec![BoundStep::new(
        "triangle",
        lhs,
        center_distance - first.deviation - second.deviation,
        Relation::AtLeast,
    )];
    steps.extend(per_run(&first).into_iter().zip(per_run(&second)).map(|(a, b)| worse(a, b)));
    steps.push(BoundStep::new("center", center_distance, system_distance - 8.0 * delta.sqrt(), Relation::AtLeast));

    let dominant = sc.dominant_projector().complement();
    let tail_weight = env.members.iter().map(|e| dominant.weight(e).clamp(0.0, 1.0)).fold(0.0, f64::max);
    Ok(BoundReport {
        lhs,
        rhs,
        slack: lhs - rhs,
        delta_used: delta,
        eta,
        gamma,
        tail_weight,
        regime: if tail_weight <= TAIL_TOL { Regime::Dominant } else { Regime::Extrapolation },
        steps,
        sigma_factor_error: None,
    })
}

/// Environment ensemble of mixtures `(1 − t_m)ρ_E + t_m σ_m` with `σ_m`
/// seeded random states supported on the dominant subspace and `t_m ≤ scale`.
pub fn environment_spread(
    base: &DensityMatrix,
    sc: &MeasurementScenario,
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<EnvironmentEnsemble> {
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::InvalidParameter(format!("environment scale {scale} outside [0, 1]")));
    }
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let rank = sc.dominant_rank();
    let space = Space::factor(crate::qcore::Factor::Environment, sc.factorization().environment);
    let members = (0..count)
        .map(|m| {
            if m == 0 || scale == 0.0 {
                return Ok(base.clone());
            }
            let s = derive_seed(seed, &[m as u64]);
            let sigma = crate::qcore::sample_state(rank, rank, s)?;
            let sigma = DensityMatrix::from_evolved(sc.embed_dominant(sigma.matrix())?, space.clone());
            let t = scale * (m as f64 / (count - 1).max(1) as f64);
            DensityMatrix::mixture(&[1.0 - t, t], &[base, &sigma])
        })
        .collect::<Result<Vec<_>>>()?;
    EnvironmentEnsemble::uniform(members)
}

/// Mechanism ensemble `(I_SA ⊗ X_l)·U` with seeded environment jitters `X_l`
/// of strength `scale`; member 0 is `U` itself.
pub fn mechanism_spread(
    base: &OutcomeUnitary,
    sc: &MeasurementScenario,
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<MechanismEnsemble> {
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let members = (0..count)
        .map(|l| if l == 0 { Ok(base.clone()) } else { base.jittered(sc, scale, derive_seed(seed, &[l as u64])) })
        .collect::<Result<Vec<_>>>()?;
    MechanismEnsemble::uniform(members)
}
