//! `cdcoref`: prepare data, cluster documents, train, predict, evaluate and
//! run ablations from the command line.
//!
//! Exit codes: 0 on success, 1 on internal errors, 2 on input errors
//! (including malformed flags).

mod commands;
mod error;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use cdcoref::config::{MentionSource, TrainConfig};
use cdcoref::corpus::{MentionMode, Split};
use cdcoref::evaluation::{Scope, SingletonMode};
use cdcoref::neural::LossKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "cdcoref",
    version,
    about = "Cross-document coreference over frozen token embeddings"
)]
struct Cli {
    /// Worker threads for per-document work; defaults to the available cores.
    /// Outputs do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Log filter for stderr: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and embeddings as a prepared workspace.
    Synth(SynthArgs),
    /// Validate a corpus against its embeddings and write a workspace index.
    Prepare(PrepareArgs),
    /// Group the documents of a split into document clusters (CSV).
    ClusterDocs(ClusterDocsArgs),
    /// Pre-train the mention scorer and write a checkpoint.
    Pretrain(TrainArgs),
    /// Train the pair scorer (pre-training first unless `--init` is given).
    Train(TrainArgs),
    /// Predict coreference clusters for a split.
    Predict(PredictArgs),
    /// Score a response against the gold clusters of a split.
    Evaluate(EvaluateArgs),
    /// Train the base model and the three ablations and report the deltas.
    Ablate(AblateArgs),
}

/// Training hyperparameters. Values come from `--config` (TOML with the same
/// keys, underscores for dashes) and are overridden by the flags below.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with any subset of the keys below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mention type: event, entity or all.
    #[arg(long)]
    pub mode: Option<MentionMode>,
    /// Candidate source: gold mentions or predicted (pruned) spans.
    #[arg(long)]
    pub mentions: Option<MentionSource>,
    /// Pair-training epochs [default: 30].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mention pairs per gradient step, and spans per step in pre-training [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 1e-4].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Dropout after each hidden layer [default: 0.3].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden width of the mention and pair scorers [default: 1024].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Width-embedding size [default: 20].
    #[arg(long)]
    pub width_dim: Option<usize>,
    /// Longest candidate span in tokens [default: 10 event, 15 entity and all].
    #[arg(long)]
    pub max_span_width: Option<usize>,
    /// Candidates kept per document, as a fraction of its tokens
    /// [default: 0.25 event, 0.35 entity, 0.4 all].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Average-linkage stopping threshold on pair probabilities [default: 0.75].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Sampled negative pairs per positive pair [default: 20].
    #[arg(long)]
    pub neg_ratio: Option<usize>,
    /// Maximum mention-scorer pre-training epochs [default: 10].
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Pre-training stops after this many epochs without dev recall gain [default: 2].
    #[arg(long)]
    pub pretrain_patience: Option<usize>,
    /// Seed for initialization, sampling and dropout [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pair loss: bce or positive-only [default: bce].
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Ablation: skip mention-scorer pre-training.
    #[arg(long)]
    pub no_pretrain: bool,
    /// Ablation: freeze span parameters and candidates during pair training.
    #[arg(long)]
    pub frozen_pruning: bool,
    /// Ablation: train on all negative pairs.
    #[arg(long)]
    pub no_neg_sampling: bool,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown loss `{s}` (expected bce or positive-only)"))
}

impl ConfigArgs {
    /// Config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),+) => { $(if let Some(v) = self.$field { cfg.$field = v; })+ };
        }
        set!(
            mode,
            mentions,
            epochs,
            batch_size,
            learning_rate,
            dropout,
            hidden,
            width_dim,
            tau,
            neg_ratio
        );
        set!(pretrain_epochs, pretrain_patience, seed, loss);
        if let Some(v) = self.max_span_width {
            cfg.max_span_width = Some(v);
        }
        if let Some(v) = self.lambda {
            cfg.lambda = Some(v);
        }
        cfg.ablations.no_pretrain |= self.no_pretrain;
        cfg.ablations.frozen_pruning |= self.frozen_pruning;
        cfg.ablations.no_neg_sampling |= self.no_neg_sampling;
        cfg.validate()?;
        Ok(cfg.resolved())
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Workspace directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of both the corpus and the embeddings.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Weight of the shared cluster direction in mention tokens, in [0, 1].
    #[arg(long, default_value_t = 0.9)]
    pub cluster_signal: f32,
    /// Scale of the per-token Gaussian noise.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f32,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub docs_per_topic: Option<usize>,
    #[arg(long)]
    pub sentences_per_doc: Option<usize>,
    #[arg(long)]
    pub tokens_per_sentence: Option<usize>,
    #[arg(long)]
    pub events_per_sentence: Option<usize>,
    #[arg(long)]
    pub entities_per_sentence: Option<usize>,
    #[arg(long)]
    pub event_clusters_per_subtopic: Option<usize>,
    #[arg(long)]
    pub entity_clusters_per_subtopic: Option<usize>,
    /// Probability that a mention forms its own singleton cluster.
    #[arg(long)]
    pub singleton_rate: Option<f64>,
    #[arg(long)]
    pub max_mention_width: Option<usize>,
    #[arg(long)]
    pub dev_topics: Option<usize>,
    #[arg(long)]
    pub test_topics: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Corpus JSON.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embedding file (CDCE).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Workspace directory; receives `index.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DocClusterMethod {
    /// TF-IDF k-means over the split.
    #[default]
    Kmeans,
    /// Gold topics.
    Gold,
    /// Every document in one cluster (no document clustering).
    Single,
}

#[derive(Args, Debug, Clone)]
pub struct DocClusterArgs {
    /// Document clustering method.
    #[arg(long, value_enum, default_value_t = DocClusterMethod::Kmeans)]
    pub doc_clusters: DocClusterMethod,
    /// Number of k-means clusters; defaults to the number of gold topics in the split.
    #[arg(long)]
    pub k: Option<usize>,
    /// k-means seed.
    #[arg(long, default_value_t = 0)]
    pub cluster_seed: u64,
}

#[derive(Args, Debug)]
pub struct ClusterDocsArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[command(flatten)]
    pub method: DocClusterArgs,
    /// Output CSV with columns `doc_id,cluster`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint to start from (`train` only); skips pre-training.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output checkpoint; the epoch log goes to `<out>.log.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Document assignment CSV from `cluster-docs`; replaces `--doc-clusters`.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    #[command(flatten)]
    pub method: DocClusterArgs,
    /// Candidate source; defaults to the checkpoint's training setting.
    #[arg(long)]
    pub mentions: Option<MentionSource>,
    /// Clustering threshold; defaults to the checkpoint's.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Pruning ratio; defaults to the checkpoint's.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Also write every scored pair to `pair_scores.csv`.
    #[arg(long)]
    pub pair_scores: bool,
    /// Output directory for `clusters.json` and `response.conll`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    /// Response clusters: `clusters.json` from `predict` or a CoNLL file (`.conll`).
    #[arg(long)]
    pub response: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Gold mentions to score against.
    #[arg(long, default_value = "event")]
    pub mode: MentionMode,
    /// combined, wd (within-document projection) or cd.
    #[arg(long, default_value = "combined")]
    pub scope: Scope,
    /// include or exclude singleton clusters.
    #[arg(long, default_value = "include")]
    pub singletons: SingletonMode,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated seeds; each seed trains all four variants.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Report text; per-seed rows go to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Input("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Prepare(a) => commands::prepare(&a),
        Command::ClusterDocs(a) => commands::cluster_docs(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
