//! Command-line driver: `pathqa <command> [flags]`.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage errors.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pathqa_core::graph::EdgeMode;
use pathqa_core::model::{CandidateScoring, ModelConfig};
use pathqa_core::train::{AdamConfig, BucketFn, TrainConfig};
use pathqa_core::Error;

#[derive(Parser, Debug)]
#[command(name = "pathqa", version, about = "Path-based multi-hop reading comprehension")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tokenize samples and locate mentions.
    Ingest(IoArgs),
    /// Build entity graphs.
    BuildGraph {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled dataset.
    Eval(EvalArgs),
    /// Accuracy broken down by document or hop count.
    Analyze {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum, default_value_t = BucketArg::DocCount)]
        by: BucketArg,
    },
    /// Train one model per layer count and report dev accuracy.
    SweepLayers {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
        layer_values: Vec<usize>,
    },
    /// Compare model gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic multi-hop corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct IoArgs {
    /// Samples as JSON lines or a JSON array.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// d=256, L=4, 300-wide embeddings, paths over 2 documents.
    Full,
    /// d=32, L=4, 32-wide embeddings, paths over 3 documents.
    Tiny,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EdgeModeArg {
    Full,
    Reduced,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    NodeSoftmaxMax,
    MaxLogitSoftmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BucketArg {
    DocCount,
    HopCount,
}

/// Model and graph settings. Unset flags keep the preset (or checkpoint)
/// value.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Hidden width [default: 256].
    #[arg(long)]
    pub d: Option<usize>,
    /// Graph layers [default: 4].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Node cap per graph [default: 600].
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Question token cap [default: 25].
    #[arg(long)]
    pub max_query: Option<usize>,
    /// Most documents on a reasoning path [default: 2].
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Width of hash embeddings [default: 300]; ignored with --embeddings.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Standard deviation of hash embedding entries [default: 0.1; 1.0
    /// for gradcheck].
    #[arg(long)]
    pub embed_std: Option<f64>,
    /// Word-vector text file; hash embeddings when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub no_reasoning_entities: bool,
    #[arg(long)]
    pub no_question_gate: bool,
    #[arg(long)]
    pub no_question_attention: bool,
    #[arg(long, value_enum)]
    pub edge_mode: Option<EdgeModeArg>,
    /// One scalar question gate per node.
    #[arg(long)]
    pub scalar_gate: bool,
    #[arg(long, value_enum)]
    pub candidate_scoring: Option<ScoringArg>,
    /// Seed for initialization, shuffling and generation.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Dev samples for model selection and early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint file to write.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Training report (epoch records and batch losses) as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    /// Global gradient-norm bound.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Epochs without dev improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// Check on the first sample of this file instead of a synthetic one.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
    /// Reasoning entities on the gold chain.
    #[arg(long, default_value_t = 2)]
    pub hops: usize,
    #[arg(long, default_value_t = 3)]
    pub distractors: usize,
    #[arg(long, default_value_t = 2000)]
    pub vocab: usize,
    /// Allow a direct subject-answer sentence.
    #[arg(long)]
    pub non_strict: bool,
    #[arg(long)]
    pub multi_fact: bool,
    /// Distractor candidates attached to the chain.
    #[arg(long)]
    pub decoys: Option<usize>,
    /// Filler sentences per document.
    #[arg(long, default_value_t = 0)]
    pub fillers: usize,
    /// Samples file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sidecar metadata file [default: <out>.meta.jsonl].
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

impl ModelArgs {
    /// Applies the preset and explicit flags on top of `base`.
    pub fn apply(&self, base: ModelConfig) -> ModelConfig {
        let mut c = match self.preset {
            Some(Preset::Tiny) => ModelConfig {
                init_seed: base.init_seed,
                ..ModelConfig::tiny()
            },
            Some(Preset::Full) => ModelConfig {
                init_seed: base.init_seed,
                ..ModelConfig::default()
            },
            None => base,
        };
        let set = |field: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut c.d, self.d);
        set(&mut c.layers, self.layers);
        set(&mut c.max_nodes, self.max_nodes);
        set(&mut c.max_query_len, self.max_query);
        set(&mut c.max_path_docs, self.max_docs);
        set(&mut c.embed_dim, self.embed_dim);
        if self.no_reasoning_entities {
            c.ablation.use_reasoning_entities = false;
        }
        if self.no_question_gate {
            c.ablation.use_question_gate = false;
        }
        if self.no_question_attention {
            c.ablation.use_question_attention_pooling = false;
        }
        if let Some(m) = self.edge_mode {
            c.ablation.edge_mode = match m {
                EdgeModeArg::Full => EdgeMode::Full6,
                EdgeModeArg::Reduced => EdgeMode::ReducedBag,
                EdgeModeArg::Single => EdgeMode::SingleType,
            };
        }
        if self.scalar_gate {
            c.scalar_question_gate = true;
        }
        if let Some(s) = self.candidate_scoring {
            c.candidate_scoring = match s {
                ScoringArg::NodeSoftmaxMax => CandidateScoring::NodeSoftmaxMax,
                ScoringArg::MaxLogitSoftmax => CandidateScoring::MaxLogitSoftmax,
            };
        }
        c
    }

    /// Configuration for a new model: the full-size settings unless a preset
    /// says otherwise, seeded from `--seed`.
    pub fn fresh_config(&self) -> ModelConfig {
        self.apply(ModelConfig {
            init_seed: self.seed,
            ..ModelConfig::default()
        })
    }
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.model.seed,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            clip: self.clip,
            patience: (self.patience > 0).then_some(self.patience),
            threads: self.model.threads,
        }
    }
}

impl From<BucketArg> for BucketFn {
    fn from(b: BucketArg) -> Self {
        match b {
            BucketArg::DocCount => BucketFn::DocCount,
            BucketArg::HopCount => BucketFn::HopCount,
        }
    }
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    /// A check that ran but did not pass.
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

/// Runs one command. `args` excludes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("pathqa")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("failed: {msg}");
            1
        }
    }
}
