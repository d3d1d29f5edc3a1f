mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "guidedel", version, about = "Entity linking with guided constrained decoding")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate entity records and write a knowledge-base file.
    BuildKb(BuildKbArgs),
    /// Build the mention dictionary and the entity-to-mention map.
    BuildDicts(BuildDictsArgs),
    /// Train the dual encoder and write the entity index.
    TrainRetriever(TrainRetrieverArgs),
    /// Train the n-gram scorer on linearized annotated documents.
    TrainScorer(TrainScorerArgs),
    /// Link documents.
    Link(LinkArgs),
    /// Repeatedly link a gold dataset and report forward counts, runtime and F1.
    Bench(BenchArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Write a synthetic knowledge base and train/test datasets.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildKbArgs {
    /// JSON Lines of {"title", "description", "aliases"}.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildDictsArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Annotated dataset to count mentions from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// One stopword per line; a built-in English list is used otherwise.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub dict_out: PathBuf,
    #[arg(long)]
    pub e2m_out: PathBuf,
    /// Lower-case mention keys.
    #[arg(long)]
    pub casefold: Option<bool>,
    /// Fail on annotations of entities missing from the knowledge base.
    #[arg(long)]
    pub strict: Option<bool>,
    /// Also add knowledge-base titles and aliases as mentions.
    #[arg(long)]
    pub aliases: Option<bool>,
    /// Expand annotations to repeated surface forms before counting.
    #[arg(long)]
    pub coref: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainScorerArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainRetrieverArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub encoder_out: PathBuf,
    #[arg(long)]
    pub index_out: PathBuf,
    /// Held-out dataset for a recall@k report.
    #[arg(long)]
    pub eval_corpus: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub chunk_len: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub buckets: Option<u32>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Guided,
    Vanilla,
    IclPrompt,
}

/// Linking resources and decoding settings shared by `link` and `bench`.
#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Scorer file written by `train-scorer`.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Entity-to-mention map (guided mode).
    #[arg(long)]
    pub e2m: Option<PathBuf>,
    /// Mention dictionary restricting vanilla mentions.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Encoder and index from `train-retriever`. Without them every
    /// knowledge-base entity is a candidate.
    #[arg(long, requires = "index")]
    pub encoder: Option<PathBuf>,
    #[arg(long, requires = "encoder")]
    pub index: Option<PathBuf>,
    /// Entities retrieved per chunk.
    #[arg(long)]
    pub k: Option<usize>,
    /// Constant added to the mention-start score.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    /// Documents decoded concurrently.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub chunk_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Dataset of documents; existing annotations are ignored.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Recorded completions to parse in icl-prompt mode; without them the
    /// prompts are written instead.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// JSON demonstration replacing the built-in one.
    #[arg(long)]
    pub exemplar: Option<PathBuf>,
    /// Tokens on each side compared when locating a response mention.
    #[arg(long)]
    pub context_window: Option<usize>,
    /// Add per-document wall time to the output.
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Gold dataset.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Comma-separated decoding modes.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub modes: Option<Vec<Mode>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    /// Exit non-zero when F1 is below this value.
    #[arg(long)]
    pub min_f1: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub test_docs: usize,
    #[arg(long, default_value_t = 60)]
    pub entities: usize,
    #[arg(long, default_value_t = 20)]
    pub families: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            report("UsageError", first);
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(commands::error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    match cli.command {
        Command::BuildKb(a) => commands::build_kb(&a),
        Command::BuildDicts(a) => commands::build_dicts(&a, &config),
        Command::TrainRetriever(a) => commands::train_retriever(&a, &config, seed),
        Command::TrainScorer(a) => commands::train_scorer(&a, &config),
        Command::Link(a) => commands::link(&a, &config),
        Command::Bench(a) => commands::bench(&a, &config, seed),
        Command::Eval(a) => commands::eval(&a, &config),
        Command::Synth(a) => commands::synth(&a, seed),
    }
}

/// One-line JSON error on stderr.
fn report(kind: &str, message: &str) {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}
