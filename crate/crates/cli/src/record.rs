use std::io::Write;

use serde::{Deserialize, Serialize};
use unimeas_core::{BoundReport, FeasibilityReport, Relation};

use crate::CliError;

/// Bumped whenever a record field changes meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: String,
    pub holds: bool,
}

/// One trial of the baseline or noisy bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub schema_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub group: usize,
    pub trial: usize,
    pub seed: u64,
    pub delta_target: f64,
    pub eta_target: Option<f64>,
    pub gamma_target: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub tail_weight: f64,
    pub regime: String,
    /// Bound asserted for this trial (dominant-subspace environment).
    pub asserted: bool,
    pub holds: bool,
    pub steps_hold: bool,
    pub sigma_factor_error: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub wall_time_s: f64,
}

/// Flat view of [`BoundRecord`] for CSV output; steps are summarized by `steps_hold`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow<'a> {
    pub schema_version: u32,
    pub kind: &'a str,
    pub config_hash: &'a str,
    pub group: usize,
    pub trial: usize,
    pub seed: u64,
    pub delta_target: f64,
    pub eta_target: Option<f64>,
    pub gamma_target: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub tail_weight: f64,
    pub regime: &'a str,
    pub asserted: bool,
    pub holds: bool,
    pub steps_hold: bool,
    pub wall_time_s: f64,
}

impl BoundRecord {
    pub fn from_report(kind: &str, report: &BoundReport) -> Self {
        let steps = report
            .steps
            .iter()
            .map(|s| StepRecord {
                label: s.label.to_string(),
                lhs: s.lhs,
                rhs: s.rhs,
                relation: match s.relation {
                    Relation::AtMost => "<=",
                    Relation::AtLeast => ">=",
                    Relation::Equal => "==",
                }
                .to_string(),
                holds: s.holds,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            config_hash: String::new(),
            group: 0,
            trial: 0,
            seed: 0,
            delta_target: 0.0,
            eta_target: None,
            gamma_target: None,
            lhs: report.lhs,
            rhs: report.rhs,
            slack: report.slack,
            delta: report.delta_used,
            eta: report.eta,
            gamma: report.gamma,
            tail_weight: report.tail_weight,
            regime: report.regime.as_str().to_string(),
            asserted: report.is_asserted(),
            holds: report.holds(),
            steps_hold: report.steps_hold(),
            sigma_factor_error: report.sigma_factor_error,
            steps,
            wall_time_s: 0.0,
        }
    }

    pub fn violated(&self) -> bool {
        self.asserted && !(self.holds && self.steps_hold)
    }

    pub fn step(&self, label: &str) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRecord {
    pub schema_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub dominant_rank: usize,
    pub dimension_ok: bool,
    pub small_eigenvalue_count: usize,
    pub required_small_count: usize,
    pub observed_small_eigenvalues: usize,
    pub threshold: f64,
    pub epsilon_max: f64,
    pub wall_time_s: f64,
}

impl FeasibilityRecord {
    pub fn from_report(config_hash: &str, trial: usize, seed: u64, r: &FeasibilityReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "feasibility".into(),
            config_hash: config_hash.into(),
            trial,
            seed,
            epsilon: r.epsilon,
            dominant_rank: r.dominant_rank,
            dimension_ok: r.dimension_ok,
            small_eigenvalue_count: r.small_eigenvalue_count,
            required_small_count: r.required_small_count,
            observed_small_eigenvalues: r.observed_small_eigenvalues,
            threshold: r.threshold,
            epsilon_max: r.epsilon_max,
            wall_time_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub schema_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub delta: f64,
    /// Largest pointer population after the shared unitary.
    pub control_definiteness: f64,
    /// `|⟨φ_0|φ_1⟩|` of the environment states correlated with the two branches.
    pub control_env_overlap: f64,
    /// Outcomes whose mechanism was run on the superposed input.
    pub mechanism_outcomes: Vec<usize>,
    pub mechanism_definiteness: Vec<f64>,
    pub holds: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
struct DemoRow<'a> {
    schema_version: u32,
    kind: &'a str,
    config_hash: &'a str,
    seed: u64,
    delta: f64,
    control_definiteness: f64,
    control_env_overlap: f64,
    min_mechanism_definiteness: f64,
    holds: bool,
    wall_time_s: f64,
}

/// Anything the runner can emit.
pub trait Record: Serialize {
    fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<(), CliError>;
}

impl Record for BoundRecord {
    fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<(), CliError> {
        let row = BoundRow {
            schema_version: self.schema_version,
            kind: &self.kind,
            config_hash: &self.config_hash,
            group: self.group,
            trial: self.trial,
            seed: self.seed,
            delta_target: self.delta_target,
            eta_target: self.eta_target,
            gamma_target: self.gamma_target,
            lhs: self.lhs,
            rhs: self.rhs,
            slack: self.slack,
            delta: self.delta,
            eta: self.eta,
            gamma: self.gamma,
            tail_weight: self.tail_weight,
            regime: &self.regime,
            asserted: self.asserted,
            holds: self.holds,
            steps_hold: self.steps_hold,
            wall_time_s: self.wall_time_s,
        };
        w.serialize(row).map_err(csv_error)
    }
}

impl Record for FeasibilityRecord {
    fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<(), CliError> {
        w.serialize(self).map_err(csv_error)
    }
}

impl Record for DemoRecord {
    fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<(), CliError> {
        let row = DemoRow {
            schema_version: self.schema_version,
            kind: &self.kind,
            config_hash: &self.config_hash,
            seed: self.seed,
            delta: self.delta,
            control_definiteness: self.control_definiteness,
            control_env_overlap: self.control_env_overlap,
            min_mechanism_definiteness: self.mechanism_definiteness.iter().copied().fold(f64::INFINITY, f64::min),
            holds: self.holds,
            wall_time_s: self.wall_time_s,
        };
        w.serialize(row).map_err(csv_error)
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes one record per line (JSON) or one row per record after a header (CSV).
pub fn write_records<R: Record, W: Write>(records: &[R], format: Format, out: W) -> Result<(), CliError> {
    match format {
        Format::Json => {
            let mut out = std::io::BufWriter::new(out);
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(|e| CliError::Io(e.to_string()))?;
                out.write_all(b"\n").map_err(|e| CliError::Io(e.to_string()))?;
            }
            out.flush().map_err(|e| CliError::Io(e.to_string()))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                r.write_csv(&mut w)?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
