mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "tsvm", version, about = "Semi-supervised linear multi-class and hierarchical classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a supervised model on a labeled file.
    Train(TrainArgs),
    /// Predict one label per line for a dataset.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Semi-supervised training with label-count constraints.
    Semisup(SemisupArgs),
    /// Compare the switching and simplex assignment solvers on random costs.
    BenchAssign(BenchArgs),
    /// Supervised, semi-supervised and all-labels arms over labeled sizes.
    LearningCurve(CurveArgs),
    /// Generate a synthetic dataset with known labels.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LossArg {
    Margin,
    Maxent,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Switching,
    Simplex,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DistributionArg {
    Uniform,
    Integer,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Clusters,
    SparseText,
}

#[derive(Args, Clone)]
pub struct ModelOpts {
    #[arg(long, value_enum, default_value = "margin")]
    pub loss: LossArg,
    /// Regularization weight; defaults to 10 for margin, 1e-3 for maxent.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Taxonomy file; a flat problem when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Number of classes of a flat problem; inferred from the labels when
    /// omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone)]
pub struct SemisupOpts {
    /// Final unlabeled-term weight.
    #[arg(long)]
    pub cu: Option<f64>,
    /// Comma-separated increasing weights; overrides --cu.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "switching")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 20)]
    pub max_inner: usize,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Write the model in the text format instead of binary.
    #[arg(long)]
    pub text: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions, one label per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold labels: a labeled dataset or one label per line.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SemisupArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    #[arg(long)]
    pub unlabeled: PathBuf,
    /// Labeled test set for the side-by-side report.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Gold labels of the unlabeled set, one per line. Used for the counts
    /// when no other source is given, and for scoring the transduced labels.
    #[arg(long)]
    pub unlabeled_gold: Option<PathBuf>,
    /// Comma-separated class fractions of the unlabeled set.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["counts", "phi_from_labeled"])]
    pub phi: Option<Vec<f64>>,
    /// Comma-separated exact class counts of the unlabeled set.
    #[arg(long, value_delimiter = ',', conflicts_with = "phi_from_labeled")]
    pub counts: Option<Vec<usize>>,
    /// Take the class fractions from the labeled set.
    #[arg(long)]
    pub phi_from_labeled: bool,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub semi: SemisupOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub distribution: DistributionArg,
    /// Number of instances; their seeds are `seed, seed + 1, …`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CurveArgs {
    /// Fully labeled dataset to split.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated labeled-set sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    /// Number of repetitions; their seeds are `seed, seed + 1, …`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.5)]
    pub unlabeled_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub labeled_frac: f64,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub semi: SemisupOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "clusters")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub labeled_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub unlabeled_per_class: usize,
    /// Clusters: number of pure-noise features.
    #[arg(long)]
    pub noise_dims: Option<usize>,
    /// Clusters: standard deviation of the noise features.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Sparse text: vocabulary size.
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, inputs or files; exit code 2.
    Config(String),
    /// A numerical solver failed; exit code 3.
    Solver(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<tsvm_core::Error> for CliError {
    fn from(e: tsvm_core::Error) -> Self {
        if e.is_solver_failure() {
            CliError::Solver(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "error: {msg}"),
            CliError::Solver(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Semisup(a) => commands::semisup(a),
        Command::BenchAssign(a) => commands::bench_assign(a),
        Command::LearningCurve(a) => commands::learning_curve(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
