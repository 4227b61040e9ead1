//! Batch pipeline for preparedness-adjusted enrollment disparity
//! estimation: simulate cohorts, estimate adjusted and baseline
//! disparities with bootstrap intervals, bound them under hypothetical
//! unmeasured confounding, and render reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::MissingUpstream;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "prepadjust", version, about)]
struct Cli {
    /// path to the run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// run seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,

    /// worker threads for bootstrap replicates and grid cells
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV with its ground-truth record
    Simulate,
    /// Fit the passage model, adjusted and baseline regressions, and
    /// bootstrap confidence intervals
    Estimate,
    /// Bound the adjusted estimates under hypothetical unmeasured
    /// confounding (grid search)
    Sensitivity,
    /// Render text and plot-data reports from earlier stages
    Report,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING_UPSTREAM: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<MissingUpstream>().is_some() {
        return EXIT_MISSING_UPSTREAM;
    }
    if let Some(core) = err.downcast_ref::<prepadjust::Error>() {
        return match core {
            prepadjust::Error::Io(_)
            | prepadjust::Error::Csv(_)
            | prepadjust::Error::Schema(_)
            | prepadjust::Error::Invariant { .. }
            | prepadjust::Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
    }
    // anyhow chains: inspect the root cause too
    if let Some(core) = err.root_cause().downcast_ref::<prepadjust::Error>() {
        return match core {
            prepadjust::Error::Io(_)
            | prepadjust::Error::Csv(_)
            | prepadjust::Error::Schema(_)
            | prepadjust::Error::Invariant { .. }
            | prepadjust::Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
    }
    EXIT_CONFIG
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|e| anyhow::anyhow!("cannot read config '{}': {e}", config_path.display()))?;
    let config = RunConfig::parse(&config_text)?;
    config.validate()?;
    let seed = config.seed(cli.seed)?;
    let out = config.out_dir(cli.out.clone())?;

    match cli.command {
        Command::Simulate => commands::simulate::run(&config, &config_text, seed, &out, cli.force),
        Command::Estimate => commands::estimate::run(&config, &config_text, seed, &out, cli.force),
        Command::Sensitivity => {
            commands::sensitivity::run(&config, &config_text, seed, &out, cli.force)
        }
        Command::Report => commands::report::run(&config_text, seed, &out, cli.force),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
