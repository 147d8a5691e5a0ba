//! `realign`: command-line front end for realign-core.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use realign_core::adjust::{DEFAULT_ALPHA, DEFAULT_BETA};
use realign_core::sweep::{DEFAULT_SWEEP_ALPHAS, DEFAULT_SWEEP_BETAS};

use crate::error::{EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "realign",
    version,
    about = "Embedding adjustment and drift diagnostics for personalized tokens"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rescale and rotate learned embeddings toward their concept.
    Adjust(AdjustArgs),
    /// Pairwise set distances between prompt-embedding sets.
    Drift(DriftArgs),
    /// Norm histogram of a vocabulary, or drift trajectory of a checkpoint series.
    Norms(NormsArgs),
    /// Evaluate a set distance over an (alpha, beta) grid.
    Sweep(SweepArgs),
    /// Generate a synthetic drift trajectory.
    Simulate(SimulateArgs),
    /// Check that a directory holds a well-formed artifact.
    Validate(ValidateArgs),
    /// Build paired keyword/concept prompt lists from templates.
    Prompts(PromptsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Token,
    Prompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroNorm {
    Error,
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    L2,
    Hausdorff,
    Mahalanobis,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovarianceArg {
    Diagonal,
    Shrinkage,
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    /// Artifact holding the learned embeddings.
    #[arg(long)]
    pub input: PathBuf,
    /// Label of the concept row (token level).
    #[arg(long)]
    pub concept: Option<String>,
    /// Artifact holding the concept embeddings; required at prompt level.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Label of the learned token row (token level).
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA, conflicts_with = "beta_auto")]
    pub beta: f64,
    /// Pick beta halfway between the learned and concept norms.
    #[arg(long)]
    pub beta_auto: bool,
    #[arg(long, value_enum, default_value_t = Level::Token)]
    pub level: Level,
    #[arg(long, value_enum, default_value_t = ZeroNorm::Passthrough)]
    pub zero_norm: ZeroNorm,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    pub metric: MetricArg,
    /// Softmax temperature for the KL metric.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value_t = CovarianceArg::Diagonal)]
    pub covariance: CovarianceArg,
    /// Shrinkage weight for the full covariance estimate.
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
    /// Report mean Euclidean distance instead of mean squared distance.
    #[arg(long)]
    pub unsquared: bool,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    #[arg(long)]
    pub set_a: PathBuf,
    #[arg(long)]
    pub set_b: PathBuf,
    /// Further sets; may be repeated.
    #[arg(long)]
    pub set_c: Vec<PathBuf>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Include the intra-set diagonal.
    #[arg(long)]
    pub intra: bool,
    /// Report path; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NormsArgs {
    /// Vocabulary matrix, or a checkpoint series for a trajectory.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Tokens to locate. For a series: the learned token, then the concept.
    #[arg(long, value_delimiter = ',')]
    pub highlight: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Reference series; selects the prompt-level trajectory.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Leave highlighted rows out of the bin counts.
    #[arg(long)]
    pub exclude_highlighted: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_ALPHAS)]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_BETAS)]
    pub betas: Vec<f64>,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_enum, default_value_t = ZeroNorm::Passthrough)]
    pub zero_norm: ZeroNorm,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Relative norm growth per step.
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    /// Rotation per step, in radians.
    #[arg(long, default_value_t = 0.02)]
    pub omega: f64,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on the rotation angle.
    #[arg(long)]
    pub max_angle: Option<f64>,
    /// Standard deviation of per-checkpoint Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Simulate a prompt of this many positions instead of a single token.
    #[arg(long)]
    pub prompt_len: Option<usize>,
    /// Drifting positions for a prompt simulation (default: 0).
    #[arg(long, value_delimiter = ',')]
    pub drift_positions: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PromptsArgs {
    #[arg(long)]
    pub templates: PathBuf,
    #[arg(long)]
    pub keyword: String,
    #[arg(long)]
    pub concept: String,
    /// Prompts carrying the keyword.
    #[arg(long)]
    pub out_a: PathBuf,
    /// Prompts carrying the concept word.
    #[arg(long)]
    pub out_b: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match cli.command {
        Command::Adjust(a) => commands::adjust(&a),
        Command::Drift(a) => commands::drift(&a),
        Command::Norms(a) => commands::norms(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Prompts(a) => commands::prompts(&a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
