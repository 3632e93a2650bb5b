//! Command-line front end: argument parsing, exit codes and the
//! subcommand implementations.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "BEAMKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "beamkit", version, about = "Multichannel target speech separation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an anechoic two-source dataset (WAVs plus manifest.json).
    Simulate(SimulateArgs),
    /// Dump spatial and spectral features of every scene as tensor containers.
    Features(FeaturesArgs),
    /// Ideal masks and closed-form beamformers; writes WAVs and eval.csv.
    OracleBf(OracleArgs),
    /// Train a pipeline; writes checkpoint.bkt and the loss trace.
    Train(TrainArgs),
    /// Separate every scene of a manifest with a checkpoint.
    Separate(SeparateArgs),
    /// Beam pattern of oracle closed-form weights as CSV.
    Beampattern(BeampatternArgs),
    /// Score estimate WAVs against the manifest targets.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON with duration_s, policy and geometry.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Pipeline JSON; selects the domain, grid, pairs and bank seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Take the configuration and filters from a trained checkpoint instead.
    #[arg(long, conflicts_with = "config")]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// manifest.json written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Oracle JSON (grids, latent bands, bank seed, TD averaging).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Method to run; repeat for several. Default: all.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Beamformer statistics from the true images rather than ratio-masked mixtures.
    #[arg(long)]
    pub oracle: bool,
    /// Overrides the bank seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pipeline JSON; defaults to the time-domain configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Feed the true images instead of estimated masks (trains the head).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub data: PathBuf,
    /// Validation manifest driving the learning-rate schedule.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BeampatternArgs {
    /// Oracle JSON (grids, TD averaging).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fd-eq-mvdr, fd-eq-mcwf, td-eq-mvdr or td-eq-mcwf.
    #[arg(long, default_value = "fd-eq-mvdr")]
    pub method: String,
    /// Take the scene from a manifest instead of simulating one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub scene: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 60.0)]
    pub target_doa: f64,
    #[arg(long, default_value_t = 120.0)]
    pub interferer_doa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Comma-separated frequencies in Hz.
    #[arg(long, value_delimiter = ',', default_values_t = [1000.0, 2000.0, 3000.0])]
    pub freqs: Vec<f64>,
    /// Frame index; default is the first frame (FD) or the frame average (TD).
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of `<scene id>_<method>.wav` estimates.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Only score these methods (each must exist for every scene).
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Singular { .. } | Error::NonFinite(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    // Fails only if a pool already exists, in which case it is left as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Features(a) => commands::features(&a),
        Command::OracleBf(a) => commands::oracle_bf(&a),
        Command::Train(a) => commands::train(&a),
        Command::Separate(a) => commands::separate(&a),
        Command::Beampattern(a) => commands::beampattern(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}

/// Parses `std::env::args`, runs, and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
