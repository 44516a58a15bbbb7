use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use fragstorm::{run, Experiment, ExperimentConfig, Format, HarnessError, Pool, RawConfig};

/// Simulation and verification experiments for self-similar fragmentations.
///
/// Exit status: 0 all checks passed, 1 runtime failure, 2 acceptance
/// deviation, 3 configuration error. FRAGSTORM_THREADS caps the worker pool.
#[derive(Debug, Parser)]
#[command(name = "fragstorm", version)]
struct Cli {
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `replicas` from the config file.
    #[arg(long)]
    replicas: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn execute(cli: &Cli) -> Result<i32, HarnessError> {
    let mut raw = RawConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        raw.set("seed", s.to_string());
    }
    if let Some(r) = cli.replicas {
        raw.set("replicas", r.to_string());
    }
    if let Some(p) = &cli.out {
        raw.set("output.path", p.display().to_string());
    }
    if let Some(f) = cli.format {
        raw.set("output.format", if f == Format::Json { "json" } else { "csv" });
    }
    let cfg = ExperimentConfig::from_raw(cli.experiment, raw)?;
    let pool = Pool::from_env()?;

    let start = Instant::now();
    let outcome = run(&cfg, &pool)?;
    eprintln!(
        "fragstorm {}: {:.3}s on {} threads, {} deviations, {} failures",
        cfg.experiment.name(),
        start.elapsed().as_secs_f64(),
        pool.threads(),
        outcome.deviations,
        outcome.failures
    );

    let bytes = outcome.table.render(cfg.format)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, &bytes).map_err(|source| HarnessError::Write {
            path: path.clone(),
            source,
        })?,
        None => std::io::stdout().write_all(&bytes).map_err(|source| HarnessError::Write {
            path: "<stdout>".into(),
            source,
        })?,
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = execute(&cli).unwrap_or_else(|e| {
        eprintln!("fragstorm: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
