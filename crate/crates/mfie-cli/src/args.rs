//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mfie",
    about = "Multi-format information extraction pipelines: relation schema transforms, \
             event extraction trainers, and the matching evaluation suite.",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct IoArgs {
    /// Input JSONL file; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct TrainOverrides {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// FGM perturbation radius; 0 disables adversarial training.
    #[arg(long)]
    pub fgm_epsilon: Option<f64>,
    #[arg(long)]
    pub trigger_weight: Option<f64>,
    #[arg(long)]
    pub arg_weight: Option<f64>,
    #[arg(long)]
    pub fusion_warmup: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Rewrite multi-slot relations into single-slot triples.
    Disintegrate {
        /// Schema file (JSONL: predicate, subject_type, object_type map).
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Reassemble multi-slot relations from single-slot triples.
    Recompose {
        #[arg(long)]
        schema: PathBuf,
        /// Require both generated forms of a slot to corroborate.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Merge prediction files by vote count.
    Vote {
        /// Prediction files, one JSONL per model.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Votes needed to keep a record; majority of inputs when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        /// Per-input weights; switches to weighted voting.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split documents into sliding-window segments.
    SplitDoc {
        #[arg(long, default_value_t = 512)]
        window: usize,
        #[arg(long, default_value_t = 256)]
        stride: usize,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Synonym replacement and random deletion with entity protection.
    Augment {
        /// Synonym dictionary: one group per line, tab-separated tokens.
        #[arg(long)]
        synonyms: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        replace_prob: f64,
        #[arg(long, default_value_t = 0.1)]
        delete_prob: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Train the sentence-level extractor on event records.
    TrainSee {
        /// Training records (JSONL).
        #[arg(long)]
        train: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        model_out: PathBuf,
        /// Per-epoch metrics JSONL; stdout when omitted.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Train the document-level extractor on event records.
    TrainDee {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Predict sentence-level events with a trained checkpoint.
    PredictSee {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Predict document-level events with a trained checkpoint.
    PredictDee {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 512)]
        window: usize,
        #[arg(long, default_value_t = 256)]
        stride: usize,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Exact-match relation F1.
    EvalRe {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Token-level argument F1 for sentence-level events.
    EvalSee {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Event-level matching F1 for document-level events.
    EvalDee {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Greedy event pairing instead of the exact assignment.
        #[arg(long)]
        greedy: bool,
    },
    /// All three subtask scores plus their macro average.
    ScoreAll {
        #[arg(long)]
        re_pred: PathBuf,
        #[arg(long)]
        re_gold: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        see_pred: PathBuf,
        #[arg(long)]
        see_gold: PathBuf,
        #[arg(long)]
        dee_pred: PathBuf,
        #[arg(long)]
        dee_gold: PathBuf,
    },
}
