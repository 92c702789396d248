//! Batch runner: reads a scenario configuration, runs seeded verification
//! trials and writes one structured record per trial.

pub mod commands;
pub mod config;
pub mod record;

pub use commands::{cmd_baseline, cmd_demo_vonneumann, cmd_feasibility, cmd_noisy, cmd_sweep};
pub use config::ScenarioConfig;
pub use record::{write_records, BoundRecord, DemoRecord, FeasibilityRecord, Format};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] unimeas_core::Error),
    #[error("output error: {0}")]
    Io(String),
}
