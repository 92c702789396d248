use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use unimeas_core::ensemble::{central_member, environment_spread, mechanism_spread};
use unimeas_core::mechanism::{
    apparatus_definiteness, apply_mechanism, build_perturbed_mechanism, von_neumann_control,
};
use unimeas_core::qcore::{derive_seed, rng_from_seed, state_from_rng, CVector, SeededRng};
use unimeas_core::{
    appendix_chain, check_feasibility, noisy_report, DensityMatrix, EnvironmentEnsemble, Factor,
    MeasurementScenario, MechanismEnsemble, OutcomeUnitary, PureState, Space,
};

use crate::config::{ScenarioConfig, WeightSpec};
use crate::record::{BoundRecord, DemoRecord, FeasibilityRecord};
use crate::CliError;

const TRIAL_STREAM: u64 = 1;
const POOL_STREAM: u64 = 2;
const MECH_SPREAD_STREAM: u64 = 3;
const ENV_SPREAD_STREAM: u64 = 4;

/// Bisection steps when scaling an ensemble to a target spread.
const SCALE_STEPS: usize = 40;

/// Largest mechanism jitter strength searched for a `γ` target.
const MAX_MECHANISM_SCALE: f64 = std::f64::consts::PI;

/// Tolerance for the demo's control definiteness of 1/2.
const DEMO_TOL: f64 = 1e-9;

/// Runs `f(0..n)` on `workers` threads; results come back in index order.
fn run_trials<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> Result<T, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Per-trial seed, independent of the sweep group.
pub fn trial_seed(cfg: &ScenarioConfig, trial: usize) -> u64 {
    derive_seed(cfg.seed, &[TRIAL_STREAM, trial as u64])
}

/// Inputs of one trial: two admissible system states and an initial environment.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub rho_s: DensityMatrix,
    pub rho_s_prime: DensityMatrix,
    pub rho_e: DensityMatrix,
}

fn admissible_state(rng: &mut SeededRng, sc: &MeasurementScenario) -> Result<DensityMatrix, CliError> {
    let d = sc.factorization().system;
    loop {
        let rank = rng.random_range(1..=d);
        let rho = state_from_rng(rng, d, rank)?.with_space(Space::factor(Factor::System, d))?;
        if sc.admissibility(&rho).is_ok() {
            return Ok(rho);
        }
    }
}

/// Environment with rank drawn from `1..=D` inside the dominant subspace, and
/// weight `tail` on a random state of its complement.
pub fn environment_state(
    rng: &mut SeededRng,
    sc: &MeasurementScenario,
    tail: f64,
) -> Result<DensityMatrix, CliError> {
    let rank = sc.dominant_rank();
    let d_e = sc.factorization().environment;
    let space = Space::factor(Factor::Environment, d_e);
    let inner_rank = rng.random_range(1..=rank);
    let inner = state_from_rng(rng, rank, inner_rank)?;
    let dominant = DensityMatrix::new(sc.embed_dominant(inner.matrix())?, space.clone())?;
    if tail == 0.0 {
        return Ok(dominant);
    }
    let complement = sc.dominant_projector().complement();
    let raw = state_from_rng(rng, d_e, d_e)?;
    let p = complement.matrix();
    let mut outside = p * raw.matrix() * p;
    let weight = outside.trace().re;
    outside.unscale_mut(weight);
    let outside = DensityMatrix::new(outside, space)?;
    Ok(DensityMatrix::mixture(&[1.0 - tail, tail], &[&dominant, &outside])?)
}

pub fn trial_inputs(cfg: &ScenarioConfig, sc: &MeasurementScenario, trial: usize) -> Result<TrialInputs, CliError> {
    let mut rng = rng_from_seed(trial_seed(cfg, trial));
    let rho_s = admissible_state(&mut rng, sc)?;
    let rho_s_prime = admissible_state(&mut rng, sc)?;
    let rho_e = environment_state(&mut rng, sc, cfg.env_tail)?;
    Ok(TrialInputs { rho_s, rho_s_prime, rho_e })
}

/// `mechanism_pool` calibrated mechanisms for `delta`; trial `i` uses entry `i % pool`.
pub fn mechanism_pool(cfg: &ScenarioConfig, sc: &MeasurementScenario, delta: f64) -> Result<Vec<OutcomeUnitary>, CliError> {
    (0..cfg.mechanism_pool)
        .map(|k| {
            let member_sc = sc.clone().with_seed(derive_seed(cfg.seed, &[POOL_STREAM, k as u64]));
            Ok(build_perturbed_mechanism(&member_sc, delta)?)
        })
        .collect()
}

/// Environment mixing scale of a noisy group.
#[derive(Clone, Copy)]
enum EnvScale {
    Fixed(f64),
    /// Rescaled per trial so that the measured `η` equals the target.
    Target(f64),
}

struct Group {
    delta: f64,
    eta_target: Option<f64>,
    gamma_target: Option<f64>,
    mechanism_scale: f64,
    environment_scale: EnvScale,
}

fn stamp(mut rec: BoundRecord, cfg_hash: &str, group: usize, trial: usize, seed: u64, g: &Group) -> BoundRecord {
    rec.config_hash = cfg_hash.to_string();
    rec.group = group;
    rec.trial = trial;
    rec.seed = seed;
    rec.delta_target = g.delta;
    rec.eta_target = g.eta_target;
    rec.gamma_target = g.gamma_target;
    rec
}

fn baseline_group(
    cfg: &ScenarioConfig,
    sc: &MeasurementScenario,
    group_index: usize,
    group: &Group,
    workers: usize,
) -> Result<Vec<BoundRecord>, CliError> {
    let pool = mechanism_pool(cfg, sc, group.delta)?;
    let hash = cfg.hash();
    run_trials(workers, cfg.trials, |trial| {
        let start = Instant::now();
        let inputs = trial_inputs(cfg, sc, trial)?;
        let u = &pool[trial % pool.len()];
        let report = appendix_chain(u, &inputs.rho_s, &inputs.rho_s_prime, &inputs.rho_e, sc)?;
        let mut rec = stamp(BoundRecord::from_report("baseline", &report), &hash, group_index, trial, trial_seed(cfg, trial), group);
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    })
}

fn ensembles(
    cfg: &ScenarioConfig,
    sc: &MeasurementScenario,
    base: &OutcomeUnitary,
    rho_e: &DensityMatrix,
    trial: usize,
    mechanism_scale: f64,
    environment_scale: f64,
) -> Result<(MechanismEnsemble, EnvironmentEnsemble), CliError> {
    let spec = cfg.ensemble.clone().unwrap_or_default();
    let seed = trial_seed(cfg, trial);
    let mech = mechanism_spread(base, sc, spec.mechanisms, mechanism_scale, derive_seed(seed, &[MECH_SPREAD_STREAM]))?;
    let env = environment_spread(rho_e, sc, spec.environments, environment_scale, derive_seed(seed, &[ENV_SPREAD_STREAM]))?;
    match spec.weights {
        WeightSpec::Uniform(_) => Ok((mech, env)),
        WeightSpec::Explicit(w) => Ok((
            MechanismEnsemble::new(mech.members().to_vec(), w.mechanisms)?,
            EnvironmentEnsemble::new(env.members().to_vec(), w.environments)?,
        )),
    }
}

fn noisy_group(
    cfg: &ScenarioConfig,
    sc: &MeasurementScenario,
    group_index: usize,
    group: &Group,
    workers: usize,
) -> Result<Vec<BoundRecord>, CliError> {
    let pool = mechanism_pool(cfg, sc, group.delta)?;
    let hash = cfg.hash();
    run_trials(workers, cfg.trials, |trial| {
        let start = Instant::now();
        let inputs = trial_inputs(cfg, sc, trial)?;
        let base = &pool[trial % pool.len()];
        let env_scale = match group.environment_scale {
            EnvScale::Fixed(s) => s,
            EnvScale::Target(eta) => scale_for_eta(cfg, sc, base, &inputs.rho_e, trial, eta)?,
        };
        let (mech, env) = ensembles(cfg, sc, base, &inputs.rho_e, trial, group.mechanism_scale, env_scale)?;
        let report = noisy_report(&mech, &env, &inputs.rho_s, &inputs.rho_s_prime, sc)?;
        let mut rec = stamp(BoundRecord::from_report("noisy", &report), &hash, group_index, trial, trial_seed(cfg, trial), group);
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    })
}

fn single_group(cfg: &ScenarioConfig) -> Group {
    let spec = cfg.ensemble.clone().unwrap_or_default();
    Group {
        delta: cfg.delta,
        eta_target: None,
        gamma_target: None,
        mechanism_scale: spec.mechanism_scale,
        environment_scale: EnvScale::Fixed(spec.environment_scale),
    }
}

/// Mixing scale giving spread `eta` for one trial's environment ensemble.
///
/// Members are `(1 − t_m)ρ_E + t_m σ_m` with `t_m` proportional to the scale
/// and `σ_m` independent of it, so `η` is linear in the scale. Targets beyond
/// reach are capped at scale 1; the record then reports the smaller `η`.
fn scale_for_eta(
    cfg: &ScenarioConfig,
    sc: &MeasurementScenario,
    base: &OutcomeUnitary,
    rho_e: &DensityMatrix,
    trial: usize,
    eta: f64,
) -> Result<f64, CliError> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    let (_, env) = ensembles(cfg, sc, base, rho_e, trial, 0.0, 1.0)?;
    let full = central_member(&env)?.1;
    Ok(if full > eta { eta / full } else { 1.0 })
}

/// Baseline bound with its intermediate steps over `trials` seeded trials.
pub fn cmd_baseline(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<BoundRecord>, CliError> {
    let sc = cfg.scenario()?;
    baseline_group(cfg, &sc, 0, &single_group(cfg), workers)
}

/// Noise-included bound; ensemble sizes and scales come from `[ensemble]`.
pub fn cmd_noisy(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<BoundRecord>, CliError> {
    if cfg.ensemble.is_none() {
        return Err(CliError::Config("noisy runs need an [ensemble] table".into()));
    }
    let sc = cfg.scenario()?;
    noisy_group(cfg, &sc, 0, &single_group(cfg), workers)
}

/// Smallest scale in `[0, upper]` whose spread reaches `target`, by bisection.
fn scale_for_target(
    target: f64,
    upper: f64,
    name: &str,
    spread: impl Fn(f64) -> Result<f64, CliError>,
) -> Result<f64, CliError> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let reachable = spread(upper)?;
    if reachable < target {
        return Err(CliError::Config(format!(
            "{name} target {target} unreachable: largest scale gives {reachable}"
        )));
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..SCALE_STEPS {
        let mid = 0.5 * (lo + hi);
        if spread(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Groups over `deltas × etas × gammas`. Without `η`/`γ` targets each group is
/// a baseline run. Otherwise the environment scale is fitted per trial to the
/// `η` target, and the mechanism scale is fitted once on trial 0 to the `γ`
/// target; every trial reports its own measured `η`, `γ`.
pub fn cmd_sweep(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<BoundRecord>, CliError> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let sc = cfg.scenario()?;
    let deltas = if sweep.deltas.is_empty() { vec![cfg.delta] } else { sweep.deltas.clone() };
    let mut records = Vec::new();
    if sweep.etas.is_empty() && sweep.gammas.is_empty() {
        for (g, delta) in deltas.iter().enumerate() {
            let group = Group { delta: *delta, ..single_group(cfg) };
            records.extend(baseline_group(cfg, &sc, g, &group, workers)?);
        }
        return Ok(records);
    }
    let etas = if sweep.etas.is_empty() { vec![0.0] } else { sweep.etas.clone() };
    let gammas = if sweep.gammas.is_empty() { vec![0.0] } else { sweep.gammas.clone() };
    let probe = trial_inputs(cfg, &sc, 0)?;
    let mut g = 0;
    for delta in &deltas {
        let pool = mechanism_pool(cfg, &sc, *delta)?;
        let mechanism_scales = gammas
            .iter()
            .map(|gamma| {
                scale_for_target(*gamma, MAX_MECHANISM_SCALE, "gamma", |s| {
                    let (mech, _) = ensembles(cfg, &sc, &pool[0], &probe.rho_e, 0, s, 0.0)?;
                    Ok(central_member(&mech)?.1)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for eta in &etas {
            for (gamma, mechanism_scale) in gammas.iter().zip(&mechanism_scales) {
                let group = Group {
                    delta: *delta,
                    eta_target: Some(*eta),
                    gamma_target: Some(*gamma),
                    mechanism_scale: *mechanism_scale,
                    environment_scale: EnvScale::Target(*eta),
                };
                records.extend(noisy_group(cfg, &sc, g, &group, workers)?);
                g += 1;
            }
        }
    }
    Ok(records)
}

/// Spectral feasibility of each trial's initial environment.
pub fn cmd_feasibility(cfg: &ScenarioConfig, workers: usize) -> Result<Vec<FeasibilityRecord>, CliError> {
    let sc = cfg.scenario()?;
    let fact = cfg.factorization()?;
    let hash = cfg.hash();
    run_trials(workers, cfg.trials, |trial| {
        let start = Instant::now();
        let inputs = trial_inputs(cfg, &sc, trial)?;
        let report = check_feasibility(&inputs.rho_e, &fact, cfg.epsilon_max)?;
        let mut rec = FeasibilityRecord::from_report(&hash, trial, trial_seed(cfg, trial), &report);
        rec.wall_time_s = start.elapsed().as_secs_f64();
        Ok(rec)
    })
}

/// Superposed input `(|o_0⟩ + |o_1⟩)/√2` under the shared von Neumann unitary
/// and under the outcome-conditioned mechanisms for outcomes 0 and 1.
pub fn cmd_demo_vonneumann(cfg: &ScenarioConfig) -> Result<DemoRecord, CliError> {
    let start = Instant::now();
    let sc = cfg.scenario()?;
    let f = sc.factorization();
    if f.system < 2 {
        return Err(CliError::Config("the demo needs at least two outcomes".into()));
    }
    let amps: CVector = sc.observable(0) + sc.observable(1);
    let input = PureState::normalized(amps, Space::factor(Factor::System, f.system))?;
    let control = von_neumann_control(&sc, &input)?;
    let overlap = control.env_pointers[0].dotc(&control.env_pointers[1]).norm();

    let env = PureState::new(sc.dominant_env_basis()[0].clone(), Space::factor(Factor::Environment, f.environment))?
        .density();
    let outcomes = vec![0, 1];
    let mut definiteness = Vec::new();
    for theta in &outcomes {
        let sc_theta = MeasurementScenario::randomized(*f, *theta, sc.dominant_rank(), cfg.seed)?;
        let u = build_perturbed_mechanism(&sc_theta, cfg.delta)?;
        let ev = apply_mechanism(&u, &input.density(), &env, &sc_theta)?;
        definiteness.push(apparatus_definiteness(&ev.apparatus, &sc_theta));
    }
    let holds = (control.definiteness - 0.5).abs() <= DEMO_TOL
        && definiteness.iter().all(|d| *d >= 1.0 - cfg.delta - DEMO_TOL);
    Ok(DemoRecord {
        schema_version: crate::record::SCHEMA_VERSION,
        kind: "demo-vonneumann".into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        delta: cfg.delta,
        control_definiteness: control.definiteness,
        control_env_overlap: overlap,
        mechanism_outcomes: outcomes,
        mechanism_definiteness: definiteness,
        holds,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
