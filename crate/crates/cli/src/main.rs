use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hamrom_cli::config::{preset, ExperimentConfig};
use hamrom_cli::{run, CliError, CliResult, Stage};

/// Structure-preserving reduced models of parametric Hamiltonian systems.
#[derive(Parser, Debug)]
#[command(name = "hamrom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Shipped configuration: wave-paper, wave-desk, nls-paper or nls-desk.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Greedy scans only the newest trajectory for the next basis vector.
    #[arg(long, global = true)]
    fresh_snapshots: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate the full model over the parameter grid.
    Snapshots,
    /// Build a reduced basis (pod, cotangent, csvd or greedy).
    BuildBasis,
    /// Build a DEIM operator or an SDEIM-enlarged basis.
    BuildDeim,
    /// Run the full and reduced model at the test parameter.
    Simulate,
    /// Write plot-ready CSV tables and a summary.
    Report,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Snapshots => Stage::Snapshots,
            Command::BuildBasis => Stage::BuildBasis,
            Command::BuildDeim => Stage::BuildDeim,
            Command::Simulate => Stage::Simulate,
            Command::Report => Stage::Report,
        }
    }
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(CliError::Config("pass --config PATH or --preset NAME".into())),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if cli.fresh_snapshots {
        cfg.basis.fresh_snapshots = true;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = load(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(cli.command.into(), &cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
