use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dipsync::experiment::{compare, execute, manifest, metrics_csv, sweep_csv, sweep_links, ExperimentSpec, Scenario};
use dipsync::metrics::{energy_csv, energy_table, EnergyParams};
use dipsync::ProtocolKind;

const SEED_ENV: &str = "DIPSYNC_SEED";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] dipsync::Error),
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: dipsync::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    BadSeed(String),
}

#[derive(Debug, Parser)]
#[command(name = "dipsync", version, about = "Transient-dip clock synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment spec; writes trace, metrics and manifest files.
    Run {
        spec: PathBuf,
        /// Output directory; overrides `output_dir` from the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dip metrics on the 3x3 test grid for each link probability.
    SweepLinks {
        #[arg(long)]
        protocol: ProtocolKind,
        #[arg(long = "p", num_args = 1.., required = true)]
        ps: Vec<f64>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Replicates per probability.
        #[arg(long, default_value_t = 11)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median dip metrics per protocol plus ordering checks.
    Compare {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, value_delimiter = ',', default_value = "tsau,uaf,baf")]
        protocols: Vec<ProtocolKind>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 11)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-protocol energy per synchronization round.
    Energy {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::BadSeed(v)),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_run(spec_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut spec = ExperimentSpec::load(spec_path).map_err(|source| CliError::Spec { path: spec_path.to_owned(), source })?;
    if let Some(seed) = seed_override()? {
        spec.sim.seed = seed;
    }
    let dir = out.or_else(|| spec.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let records = execute(&spec)?;
    let seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    let metrics = metrics_csv(&records)?;

    // single collector: every run has finished before anything is written
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    for (i, r) in records.iter().enumerate() {
        let name = if records.len() == 1 { "trace.csv".to_string() } else { format!("trace-{i}.csv") };
        write(&dir.join(name), &r.trace.to_csv_string())?;
    }
    write(&dir.join("metrics.csv"), &metrics)?;
    write(&dir.join("manifest.toml"), &manifest(&spec, &seeds))?;
    println!("{}", dir.display());
    Ok(())
}

fn execute_command(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { spec, out } => cmd_run(&spec, out),
        Command::SweepLinks { protocol, ps, seed, seeds, out } => {
            let rows = sweep_links(protocol, &ps, seed, seeds)?;
            emit(out.as_deref(), &sweep_csv(&rows))
        }
        Command::Compare { scenario, protocols, seed, seeds, out } => {
            let cmp = compare(scenario, &protocols, seed, seeds)?;
            emit(out.as_deref(), &cmp.summary_csv())?;
            for c in &cmp.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.check, c.detail);
            }
            Ok(())
        }
        Command::Energy { out } => {
            let rows = energy_table(&EnergyParams::default())?;
            emit(out.as_deref(), &energy_csv(&rows)?)
        }
    }
}

fn main() -> ExitCode {
    match execute_command(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dipsync: {e}");
            ExitCode::FAILURE
        }
    }
}
