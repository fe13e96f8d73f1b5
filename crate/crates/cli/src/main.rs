mod commands;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use presets::Preset;
use rankrecover::{ErrorClass, Loss};

#[derive(Parser)]
#[command(
    name = "rankrecover",
    version,
    about = "Pairwise ranking estimators and recovery benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON sidecar).
    Simulate(SimulateArgs),
    /// Fit one estimator to a dataset CSV.
    Fit(FitArgs),
    /// Run a recovery benchmark and write its curves.
    Benchmark(BenchmarkArgs),
    /// Project a dataset on a weight vector; LOWESS profile and curvature F-test.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory. Defaults to $RANKRECOVER_OUT, then ./rankrecover-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("RANKRECOVER_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("rankrecover-out"))
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON generator config; `"generator"` is `recovery` or `param_design`.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples (recovery generator only).
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PairsArg {
    AllUnit,
    Threshold,
    /// Threshold at the noise width recorded in the dataset sidecar.
    NoiseThreshold,
    AdjacentSubject,
}

#[derive(Args)]
pub struct FitArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// JSON fit config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<Loss>,
    /// Fixed λ. Without it λ is chosen by cross-validation over the grid.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_enum)]
    pairs: Option<PairsArg>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Minimum level gap for adjacent-subject pairs.
    #[arg(long)]
    gap: Option<f64>,
    /// Seed for the cross-validation folds.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
pub struct BenchmarkArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("weights").required(true).args(["fit", "truth"])))]
pub struct InspectArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Fit result JSON written by `fit`.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Use the ground truth from the dataset sidecar instead of a fit.
    #[arg(long)]
    truth: bool,
    #[arg(long, default_value_t = rankrecover::inspect::DEFAULT_FRAC)]
    frac: f64,
    #[arg(long, default_value_t = rankrecover::inspect::DEFAULT_ITERS)]
    iters: usize,
    /// Seed recorded in the output; defaults to the fit's.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown loss '{s}' (mse, pairwise_hinge, pairwise_logistic)"))
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<rankrecover::Error> for Failure {
    fn from(e: rankrecover::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Io => 3,
            ErrorClass::DataContract => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
