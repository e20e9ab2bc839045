//! Command-line front end: JSON configs in, CSV tables plus JSON sidecars out.

pub mod config;
pub mod error;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Experiment, ExperimentConfig, Params, SamplingMode};
pub use error::{CliError, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STABILITY};
pub use run::{execute, resolve, run_experiment, sidecar_path, sojourn_curve, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "supermarket", version, about = "Supermarket-model experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form fixed point level sums.
    FixedPoint(CommonArgs),
    /// Integrate the mean-field ODE from the empty state.
    Ode(CommonArgs),
    /// Simulate the finite system and report empirical tails.
    Simulate(CommonArgs),
    /// Expected sojourn time over d and service rate.
    SojournCurve(CommonArgs),
    /// Compare the two Poisson/Erlang fixed points.
    Erlang(CommonArgs),
    /// Distance between simulation and ODE as n grows.
    Kurtz(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path; the sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed for stochastic experiments.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the two-phase example MAP with exponential service.
    #[arg(long)]
    pub paper_defaults: bool,
}

impl Command {
    pub fn split(&self) -> (Experiment, &CommonArgs) {
        match self {
            Command::FixedPoint(a) => (Experiment::FixedPoint, a),
            Command::Ode(a) => (Experiment::Ode, a),
            Command::Simulate(a) => (Experiment::Simulate, a),
            Command::SojournCurve(a) => (Experiment::SojournCurve, a),
            Command::Erlang(a) => (Experiment::Erlang, a),
            Command::Kurtz(a) => (Experiment::Kurtz, a),
        }
    }
}

/// Builds the effective config and output path for a parsed command line.
pub fn prepare(cmd: &Command) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let (experiment, args) = cmd.split();
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(experiment),
    };
    if cfg.experiment != experiment {
        return Err(CliError::Config(format!(
            "config is for experiment {}, but subcommand is {}",
            cfg.experiment.name(),
            experiment.name()
        )));
    }
    if args.paper_defaults {
        cfg.apply_example_defaults();
    }
    if let Some(seed) = args.seed {
        cfg.params.seed = Some(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.name())));
    Ok((cfg, out))
}

/// Parses `args`, runs the experiment and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match prepare(&cli.command).and_then(|(cfg, out)| execute(&cfg, &out).map(|_| out)) {
        Ok(out) => {
            println!("wrote {}", out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
