use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use unimeas_cli::{
    cmd_baseline, cmd_demo_vonneumann, cmd_feasibility, cmd_noisy, cmd_sweep, write_records, BoundRecord, CliError,
    Format, ScenarioConfig,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Verb {
    Feasibility,
    Baseline,
    Noisy,
    Sweep,
    DemoVonneumann,
}

#[derive(Debug, Parser)]
#[command(name = "unimeas", version, about = "Run seeded verification trials for outcome-conditioned measurement mechanisms")]
struct Cli {
    #[arg(value_enum)]
    verb: Verb,
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; overrides the configured one. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "UNIMEAS_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(f))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn bound_violations(records: &[BoundRecord]) -> Vec<u64> {
    records.iter().filter(|r| r.violated()).map(|r| r.seed).collect()
}

fn run(cli: &Cli) -> Result<Vec<u64>, CliError> {
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    let out_path = cli.out.clone().or_else(|| cfg.output.clone());
    let workers = cli.workers.max(1);
    // run first so a failed run does not truncate an existing output file
    match cli.verb {
        Verb::Feasibility => {
            let records = cmd_feasibility(&cfg, workers)?;
            write_records(&records, cli.format, open_output(out_path.as_ref())?)?;
            Ok(Vec::new())
        }
        Verb::Baseline | Verb::Noisy | Verb::Sweep => {
            let records = match cli.verb {
                Verb::Baseline => cmd_baseline(&cfg, workers)?,
                Verb::Noisy => cmd_noisy(&cfg, workers)?,
                _ => cmd_sweep(&cfg, workers)?,
            };
            write_records(&records, cli.format, open_output(out_path.as_ref())?)?;
            Ok(bound_violations(&records))
        }
        Verb::DemoVonneumann => {
            let record = cmd_demo_vonneumann(&cfg)?;
            let failed = if record.holds { Vec::new() } else { vec![record.seed] };
            write_records(&[record], cli.format, open_output(out_path.as_ref())?)?;
            Ok(failed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            let seeds: Vec<String> = violations.iter().map(u64::to_string).collect();
            eprintln!("bound violated in {} trial(s); seeds: {}", violations.len(), seeds.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
