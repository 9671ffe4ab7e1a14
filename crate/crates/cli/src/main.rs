mod commands;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codemix_core::corpus::Task;
use codemix_core::mtl::RegLayer;
use codemix_core::optim::OptimizerKind;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "codemix", version, about = "Code-mixed humour, sarcasm and hate classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Class counts, symmetrized KL and hurtful-keyword coverage of a dataset.
    Stats(StatsArgs),
    /// Stratified train/val/test split of a single-task dataset.
    Split(SplitArgs),
    /// Add balanced native-language samples to a code-mixed training set.
    Mix(MixArgs),
    /// Fit and evaluate the n-gram Naive Bayes baseline.
    TrainBaseline(BaselineArgs),
    /// Train a single-task transformer classifier.
    TrainSingle(SingleArgs),
    /// Train the gated multi-task model over several seeds.
    TrainMtl(MtlArgs),
    /// Score a prediction file against gold labels.
    Eval(EvalArgs),
    /// Approximate randomization test between two prediction files.
    Significance(SignificanceArgs),
    /// Render few-shot prompts and optionally query a completion client.
    PromptRender(PromptArgs),
    /// Select few-shot exemplars from a pool.
    Shots(ShotsArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
}

impl Command {
    fn verb(&self) -> &'static str {
        match self {
            Command::Stats(_) => "stats",
            Command::Split(_) => "split",
            Command::Mix(_) => "mix",
            Command::TrainBaseline(_) => "train-baseline",
            Command::TrainSingle(_) => "train-single",
            Command::TrainMtl(_) => "train-mtl",
            Command::Eval(_) => "eval",
            Command::Significance(_) => "significance",
            Command::PromptRender(_) => "prompt-render",
            Command::Shots(_) => "shots",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct OutArgs {
    /// Directory receiving the manifest and every output file.
    #[arg(long, default_value = "codemix-out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Hurtful-keyword list, one term per line.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = codemix_core::stats::DEFAULT_ALPHA)]
    alpha: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    test_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct MixArgs {
    /// Code-mixed training samples.
    #[arg(long)]
    cm: PathBuf,
    /// Native-language pool to draw from.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct BaselineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    /// N-gram orders.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    ngrams: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum RegLayerArg {
    Last,
    SecondLast,
}

impl From<RegLayerArg> for RegLayer {
    fn from(r: RegLayerArg) -> Self {
        match r {
            RegLayerArg::Last => RegLayer::Last,
            RegLayerArg::SecondLast => RegLayer::SecondLast,
        }
    }
}

/// Training overrides. Precedence: defaults, then `--config`, then flags.
#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// TOML file with training configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Per-epoch learning rate decay factor.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Number of seeds, taken from the default seed list.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<usize>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    reg_layer: Option<RegLayerArg>,
    /// Use equal class weights in the loss.
    #[arg(long)]
    no_class_weights: bool,
    /// Task whose validation F1 selects the epoch.
    #[arg(long)]
    primary_task: Option<Task>,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    ffn: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    /// Layers in the shared bottom module.
    #[arg(long, default_value_t = 4)]
    bottom: usize,
    /// Minimum token frequency for the vocabulary.
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Sample files; repeat for several tasks. Synthetic data when absent.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Samples per task for the synthetic dataset.
    #[arg(long, default_value_t = 2000)]
    synthetic_size: usize,
    /// Seed of the train/val/test split, fixed across training seeds.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct SingleArgs {
    #[arg(long)]
    task: Task,
    /// Number of final encoder layers left trainable.
    #[arg(long, default_value_t = 4)]
    trainable_layers: usize,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum TopInitArg {
    Replicate,
    Independent,
}

#[derive(Args, Debug, Serialize)]
struct MtlArgs {
    /// Tasks to train; every task in the data (all three for synthetic data) when absent.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    /// Enable the gate; without it each head reads its task-specific top.
    #[arg(long)]
    gate: bool,
    #[arg(long, value_enum, default_value = "replicate")]
    top_init: TopInitArg,
    /// Train the bottom module and embeddings as well.
    #[arg(long)]
    train_bottom: bool,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Prediction records.
    #[arg(long)]
    pred: PathBuf,
    /// Gold samples.
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct SignificanceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct PromptArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Training samples the shots are selected from.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    /// Prompt template (TOML); the built-in template when absent.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Completion client to query with the rendered prompts.
    #[arg(long)]
    client: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct ShotsArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 1)]
    bottom: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 200)]
    coords: usize,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long)]
    no_gate: bool,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let verb = cli.command.verb();
    match commands::dispatch(&cli.command) {
        Ok(summary) => {
            output::print_summary(verb, "ok", summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, kind) = if e.is_validation() { (1, "validation") } else { (2, "runtime") };
            eprintln!("error: {e}");
            output::print_summary(verb, "error", serde_json::json!({ "kind": kind, "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args_os())
}
