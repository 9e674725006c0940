mod config;
mod error;
mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use relgrid::ensemble::ModelKind;
use relgrid::grid::PvScenario;

use config::RunConfig;
use error::CliError;
use stages::Run;

#[derive(Debug, Parser)]
#[command(name = "relgrid", version, about = "Weather-aware reliability pipeline for radial feeders")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Ensemble to train: wmsdte or tcsmsb.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    /// PV penetration scenario: low or high.
    #[arg(long, global = true)]
    scenario: Option<PvScenario>,
    /// Monte Carlo and replay trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect weather, load and price inputs into the run directory.
    Ingest,
    /// Build the labeled bus and line corpora.
    Synth,
    /// Train the failure-probability ensembles.
    Train,
    /// Compute prior-shift calibration parameters.
    Calibrate,
    /// Solve the cost-only and reliability-aware dispatches.
    Optimize,
    /// Monte Carlo and replay validation of both dispatches.
    Simulate,
    /// Compare the sampling bounds over a parameter grid.
    TheoryCheck,
    /// Collate summary tables and the artifact manifest.
    Report,
    /// Run every stage in order.
    Pipeline,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.model {
        cfg.model = m;
    }
    if let Some(s) = cli.scenario {
        cfg.scenario = s;
    }
    if let Some(t) = cli.trials {
        cfg.simulate.trials = t;
        cfg.simulate.replay_trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let run = Run::new(cfg, cli.out.clone());
    match cli.command {
        Command::Ingest => stages::ingest(&run),
        Command::Synth => stages::synth(&run),
        Command::Train => stages::train(&run),
        Command::Calibrate => stages::calibrate_stage(&run),
        Command::Optimize => stages::optimize(&run),
        Command::Simulate => stages::simulate(&run),
        Command::TheoryCheck => stages::theory_check(&run),
        Command::Report => stages::report(&run),
        Command::Pipeline => stages::pipeline(&run),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(error::exit_code(&e));
    }
}
