//! `icp`: prior sampling, posterior inference, evaluation and architecture
//! export from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error raised for bad invocations; mapped to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "icp", version, about = "Ordered-DAG prior toolkit", arg_required_else_help = true)]
pub struct Cli {
    /// TOML file with default values for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw graphs from the generative prior.
    SamplePrior(SamplePriorArgs),
    /// Run the structure chain with no data.
    Mcmc(McmcArgs),
    /// Fit a sigmoid belief network to a CSV dataset.
    Fit(FitArgs),
    /// Sample new points from fitted chains.
    Fantasy(FantasyArgs),
    /// Hellinger distance between two CSV datasets.
    Hellinger(HellingerArgs),
    /// Monte Carlo prior complexity over a hyperparameter grid.
    HyperStudy(HyperStudyArgs),
    /// Export a graph as a convolutional architecture.
    Dag2cnn(Dag2CnnArgs),
    /// Concatenate chain files.
    Merge(MergeArgs),
    /// Generate a synthetic 2-D dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SamplePriorArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Number of observed nodes at uniform random order values.
    #[arg(long, conflicts_with = "star_thetas")]
    pub stars: Option<usize>,
    /// Comma-separated fixed order values of the observed nodes.
    #[arg(long, value_delimiter = ',')]
    pub star_thetas: Option<Vec<f64>>,
    #[arg(long)]
    pub draws: Option<usize>,
    /// Place observed nodes at 0 and hidden nodes at 1.
    #[arg(long)]
    pub ibp: bool,
    /// binomial or beta-binomial.
    #[arg(long)]
    pub backward: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Independent chains; chain i uses seed + i and writes OUT with `.i`
    /// before the extension.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Keep hyperparameters at their starting values.
    #[arg(long)]
    pub fix_hypers: bool,
    /// Observed nodes, all at order value 0.
    #[arg(long)]
    pub stars_theta0: Option<usize>,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub fix_hypers: bool,
    /// Parameter and activation passes per sweep.
    #[arg(long)]
    pub passes: Option<usize>,
    /// collapsed or prior.
    #[arg(long)]
    pub structure: Option<String>,
    /// Let observed order values move.
    #[arg(long)]
    pub free_observed: bool,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct FantasyArgs {
    /// Chain files from `fit`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub chains: Vec<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HellingerArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Use a histogram with this many bins per axis.
    #[arg(long, conflicts_with = "knn")]
    pub bins: Option<usize>,
    /// Use the k-nearest-neighbour estimator.
    #[arg(long)]
    pub knn: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HyperStudyArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub phi: f64,
    /// Observed nodes per draw.
    #[arg(long, default_value_t = 1)]
    pub observables: usize,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Dag2CnnArgs {
    /// Graph record JSON, or a chain file (the last sample is used).
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub bins: u32,
    #[arg(long)]
    pub n0: u64,
    #[arg(long)]
    pub pixels: u64,
    #[arg(long, default_value_t = icp_core::convnet::DEFAULT_KERNEL)]
    pub kernel: usize,
    #[arg(long, default_value_t = icp_core::convnet::DEFAULT_CLASSES)]
    pub classes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// ring, two-moons or pinwheel.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ICP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
