use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rino_cli::commands;
use rino_cli::pipeline::Sensors;
use rino_cli::{CliError, ExperimentConfig};

/// Resolution-independent operator learning experiments.
///
/// Exit codes: 0 success, 2 config, 3 I/O, 4 data generation,
/// 5 dictionary learning, 6 operator training, 7 evaluation or
/// fingerprint mismatch.
#[derive(Parser)]
#[command(name = "rino", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (manifest.json + data.jsonl).
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Use this seed instead of the first configured one.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory; defaults to the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Learn the dictionary, train the operator and score it.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory; defaults to the configured one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        dry_run: bool,
        /// Subtract the snapshot mean before extracting POD modes.
        #[arg(long)]
        pod_center: bool,
    },
    /// Score a trained model at fixed or random input sensors.
    Eval {
        /// A seed directory written by `run`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// `random` or a uniform sensor count.
        #[arg(long, default_value = "random")]
        sensors: Sensors,
        /// Metrics file; defaults to eval-<sensors>.json in the model directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate results.csv of a run directory over seeds.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RINO_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Config(format!("RINO_THREADS must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(CliError::Config("RINO_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    threads()?;
    match cli.command {
        Command::GenData { config, seed, out, dry_run } => {
            let cfg = commands::with_seed(ExperimentConfig::load(&config)?, seed);
            commands::gen_data(&cfg, out.as_deref(), dry_run)?;
        }
        Command::Run { config, seed, dataset, out, dry_run, pod_center } => {
            let mut cfg = commands::with_seed(ExperimentConfig::load(&config)?, seed);
            cfg.operator.pod_center |= pod_center;
            commands::run(&cfg, dataset.as_deref(), &out, dry_run)?;
        }
        Command::Eval { model, dataset, sensors, out } => {
            commands::eval(&model, &dataset, sensors, out.as_deref())?;
        }
        Command::Report { out } => {
            commands::report(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
