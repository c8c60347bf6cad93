//! `scholar-intent`: one subcommand per pipeline stage.
//!
//! Every stage refuses to overwrite existing outputs unless `--force` is
//! given and writes `<output>.manifest.json` describing its inputs, resolved
//! configuration and timings. Failures print a JSON object on stderr and
//! exit with a code that identifies the failure class.

mod commands;
mod config;
mod error;
mod manifest;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "scholar-intent", version, about = "Hybrid topic modeling and next-topic prediction pipeline")]
pub struct Cli {
    /// JSON or TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, env = config::DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a `doc_id,title` CSV into JSONL token lists.
    Preprocess(PreprocessArgs),
    /// Fit LDA by collapsed Gibbs sampling.
    LdaTrain(LdaTrainArgs),
    /// Mean topic coherence for several topic counts.
    CoherenceSweep(CoherenceArgs),
    /// Train skip-gram word embeddings.
    EmbedTrain(EmbedArgs),
    /// Build the embedding-refined word-topic map.
    Fuse(FuseArgs),
    /// Assign each title its dominant topic and probe the labels.
    AssignTopics(AssignArgs),
    /// Train the LSTM next-topic model.
    IntentTrain(IntentTrainArgs),
    /// Score a trained LSTM on the held-out part of a log.
    IntentEval(IntentEvalArgs),
    /// Score the Markov and frequent-pattern baselines.
    BaselineEval(BaselineArgs),
    /// Top-k ranking metrics for recommendation lists.
    RankEval(RankArgs),
    /// Generate a synthetic click log.
    Simulate(SimulateArgs),
    /// Merge metric reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub min_token_len: Option<usize>,
    #[arg(long)]
    pub no_stem: bool,
}

#[derive(Debug, Args, Default)]
pub struct LdaOpts {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LdaTrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub lda: LdaOpts,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated candidate topic counts.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[command(flatten)]
    pub lda: LdaOpts,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also export the input vectors as `word,v1..vN` CSV.
    #[arg(long)]
    pub vectors_csv: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub lda: PathBuf,
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seeds_per_topic: Option<usize>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Word-topic map from `fuse`.
    #[arg(long, required_unless_present = "lda_only", conflicts_with = "lda_only")]
    pub map: Option<PathBuf>,
    /// LDA model; with `--lda-only`, votes use its raw distributions.
    #[arg(long, requires = "lda_only")]
    pub lda: Option<PathBuf>,
    #[arg(long, requires = "lda")]
    pub lda_only: bool,
    #[arg(long)]
    pub output: PathBuf,
    /// Metric rows of the cross-validated probe.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct IntentOpts {
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub use_liked: bool,
}

#[derive(Debug, Args)]
pub struct IntentTrainArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Number of topics in the log.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub intent: IntentOpts,
}

#[derive(Debug, Args)]
pub struct IntentEvalArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub fpm_max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// JSONL of `{"query_id", "recommended": [...], "relevant": [...]}`.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "recommender")]
    pub pipeline: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DynamicsKind {
    Sticky,
    SecondOrder,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub events_per_user: Option<usize>,
    #[arg(long, value_enum)]
    pub dynamics: Option<DynamicsKind>,
    #[arg(long)]
    pub stay_prob: Option<f64>,
    #[arg(long)]
    pub switch_prob: Option<f64>,
    #[arg(long)]
    pub session_gap_secs: Option<i64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric CSVs written by other stages.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Table output; `.md` gives Markdown, `.json` JSON, anything else CSV.
    #[arg(long)]
    pub output: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.kind.exit_code());
    }
}
