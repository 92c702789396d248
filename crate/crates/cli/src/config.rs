use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unimeas_core::{HilbertFactorization, MeasurementScenario};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub system: usize,
    pub apparatus: usize,
    pub environment: usize,
    /// Rank `D` of the dominant environment subspace.
    pub dominant_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Uniform {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitWeights {
    pub mechanisms: Vec<f64>,
    pub environments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Uniform(Uniform),
    Explicit(ExplicitWeights),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Uniform(Uniform::Uniform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub mechanisms: usize,
    #[serde(default = "default_members")]
    pub environments: usize,
    /// Strength of the environment jitter applied to each mechanism.
    #[serde(default)]
    pub mechanism_scale: f64,
    /// Largest mixing weight toward a random dominant-supported state.
    #[serde(default)]
    pub environment_scale: f64,
    #[serde(default)]
    pub weights: WeightSpec,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            mechanisms: default_members(),
            environments: default_members(),
            mechanism_scale: 0.0,
            environment_scale: 0.0,
            weights: WeightSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub deltas: Vec<f64>,
    /// Target `η` values; ensembles are scaled to reach them.
    #[serde(default)]
    pub etas: Vec<f64>,
    /// Target `γ` values.
    #[serde(default)]
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dimensions: Dimensions,
    #[serde(default)]
    pub outcome: usize,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon_max")]
    pub epsilon_max: f64,
    /// Weight of each initial environment placed outside the dominant subspace.
    #[serde(default)]
    pub env_tail: f64,
    /// Number of distinct mechanisms trials cycle through.
    #[serde(default = "default_pool")]
    pub mechanism_pool: usize,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_members() -> usize {
    5
}

fn default_trials() -> usize {
    100
}

fn default_epsilon_max() -> f64 {
    0.01
}

fn default_pool() -> usize {
    1
}

/// Largest target residual a mechanism can be calibrated to.
pub const MAX_DELTA: f64 = 0.25;

fn check_unit(name: &str, x: f64, upper: f64) -> Result<(), CliError> {
    if !(x >= 0.0 && x <= upper) {
        return Err(CliError::Config(format!("{name} = {x} must lie in [0, {upper}]")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => CliError::Config(format!("{}: {other}", path.display())),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario()?;
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.mechanism_pool == 0 {
            return Err(CliError::Config("mechanism_pool must be at least 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta < MAX_DELTA) {
            return Err(CliError::Config(format!("delta = {} must lie in [0, {MAX_DELTA})", self.delta)));
        }
        check_unit("epsilon_max", self.epsilon_max, 1.0)?;
        check_unit("env_tail", self.env_tail, 1.0)?;
        let d = &self.dimensions;
        if self.env_tail > 0.0 && d.dominant_rank >= d.environment {
            return Err(CliError::Config("env_tail > 0 needs dominant_rank < environment".into()));
        }
        if let Some(ens) = &self.ensemble {
            if ens.mechanisms == 0 || ens.environments == 0 {
                return Err(CliError::Config("ensemble sizes must be at least 1".into()));
            }
            if !(ens.mechanism_scale >= 0.0 && ens.mechanism_scale.is_finite()) {
                return Err(CliError::Config(format!("mechanism_scale = {} must be >= 0", ens.mechanism_scale)));
            }
            check_unit("environment_scale", ens.environment_scale, 1.0)?;
            if let WeightSpec::Explicit(w) = &ens.weights {
                if w.mechanisms.len() != ens.mechanisms || w.environments.len() != ens.environments {
                    return Err(CliError::Config("explicit weights must match the ensemble sizes".into()));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            for x in &sweep.deltas {
                if !(*x >= 0.0 && *x < MAX_DELTA) {
                    return Err(CliError::Config(format!("sweep delta {x} must lie in [0, {MAX_DELTA})")));
                }
            }
            for x in sweep.etas.iter().chain(&sweep.gammas) {
                check_unit("sweep eta/gamma target", *x, 2.0)?;
            }
        }
        Ok(())
    }

    pub fn factorization(&self) -> Result<HilbertFactorization, CliError> {
        let d = &self.dimensions;
        Ok(HilbertFactorization::new(d.system, d.apparatus, d.environment)?)
    }

    /// Scenario with seeded random bases.
    pub fn scenario(&self) -> Result<MeasurementScenario, CliError> {
        Ok(MeasurementScenario::randomized(
            self.factorization()?,
            self.outcome,
            self.dimensions.dominant_rank,
            self.seed,
        )?)
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}
