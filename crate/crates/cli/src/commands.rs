use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use pathqa_autodiff::{grad_check, Var};
use pathqa_core::embed::{EmbeddingProvider, HashEmbeddings, WordVectors};
use pathqa_core::graph::build_graph;
use pathqa_core::ingest::{ingest_sample, read_samples, Sample};
use pathqa_core::model::{load_checkpoint, prepare_sample, save_checkpoint, Model, ModelConfig, PreparedSample};
use pathqa_core::synth::{generate_corpus, SynthSpec};
use pathqa_core::train::{analyze_by_bucket, evaluate, prepare_dataset, sweep_layers, train};
use pathqa_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::{CliError, Command, EvalArgs, GradcheckArgs, IoArgs, ModelArgs, SynthArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(io) => ingest(&io),
        Command::BuildGraph { io, model } => build_graphs(&io, &model),
        Command::Train(args) => train_command(&args),
        Command::Eval(args) => eval_command(&args, None),
        Command::Analyze { eval, by } => eval_command(&eval, Some(by.into())),
        Command::SweepLayers { train, layer_values } => sweep(&train, &layer_values),
        Command::Gradcheck(args) => gradcheck(&args),
        Command::Synth(args) => synth(&args),
    }
}

/// Line-delimited JSON to a file, or to standard output.
fn write_lines<T: Serialize>(out: Option<&Path>, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn echo(command: &str, config: serde_json::Value) {
    eprintln!("{}", json!({ "command": command, "config": config }));
}

fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    let samples = read_samples(path)?;
    if samples.is_empty() {
        return Err(CliError::Data(Error::EmptyDataset));
    }
    Ok(samples)
}

/// Loads word vectors when a file is given (fixing the embedding width)
/// and otherwise builds hash embeddings of the configured width.
fn embedder(
    args: &ModelArgs,
    config: &mut ModelConfig,
    fixed_width: bool,
    default_std: f64,
) -> Result<Box<dyn EmbeddingProvider>> {
    match &args.embeddings {
        Some(path) => {
            let vectors = WordVectors::load(path)?;
            log::info!("loaded {} word vectors of width {}", vectors.vocab_size(), vectors.dim());
            if vectors.dim() != config.embed_dim {
                if fixed_width {
                    return Err(CliError::Usage(format!(
                        "embedding file has width {}, checkpoint expects {}",
                        vectors.dim(),
                        config.embed_dim
                    )));
                }
                config.embed_dim = vectors.dim();
            }
            Ok(Box::new(vectors))
        }
        None => {
            let std = args.embed_std.unwrap_or(default_std);
            if !(std > 0.0 && std.is_finite()) {
                return Err(CliError::Usage("--embed-std must be positive".into()));
            }
            Ok(Box::new(HashEmbeddings::new(config.embed_dim, std)))
        }
    }
}

fn ingest(io: &IoArgs) -> Result<()> {
    echo("ingest", json!({ "input": io.input, "out": io.out }));
    let samples = load_samples(&io.input)?;
    write_lines(io.out.as_deref(), samples.iter().map(ingest_sample))
}

fn build_graphs(io: &IoArgs, model: &ModelArgs) -> Result<()> {
    let config = model.fresh_config();
    config.validate()?;
    let options = config.graph_options();
    echo("build-graph", json!({ "input": io.input, "out": io.out, "graph": options }));
    let samples = load_samples(&io.input)?;
    let records = samples.iter().map(|s| {
        let gs = build_graph(&ingest_sample(s), &options);
        json!({
            "id": s.id,
            "num_docs": s.supports.len(),
            "min_path_docs": gs.min_path_docs,
            "graph": gs.graph,
        })
    });
    write_lines(io.out.as_deref(), records)
}

fn prepare_all(samples: &[Sample], embedder: &dyn EmbeddingProvider, config: &ModelConfig) -> Result<Vec<PreparedSample>> {
    Ok(prepare_dataset(samples, embedder, config)?)
}

struct TrainInputs {
    config: ModelConfig,
    train: Vec<PreparedSample>,
    dev: Option<Vec<PreparedSample>>,
}

fn train_inputs(args: &TrainArgs, command: &str) -> Result<TrainInputs> {
    let mut config = args.model.fresh_config();
    let emb = embedder(&args.model, &mut config, false, HashEmbeddings::DEFAULT_STD)?;
    config.validate()?;
    let tc = args.train_config();
    tc.validate()?;
    echo(
        command,
        json!({ "input": args.input, "dev": args.dev, "model": config, "train": tc }),
    );
    let train_samples = load_samples(&args.input)?;
    let dev_samples = args.dev.as_deref().map(load_samples).transpose()?;
    let train = prepare_all(&train_samples, emb.as_ref(), &config)?;
    let dev = dev_samples.map(|d| prepare_all(&d, emb.as_ref(), &config)).transpose()?;
    Ok(TrainInputs { config, train, dev })
}

fn train_command(args: &TrainArgs) -> Result<()> {
    let inputs = train_inputs(args, "train")?;
    let mut model = Model::new(inputs.config)?;
    let report = train(&mut model, &inputs.train, inputs.dev.as_deref(), &args.train_config())?;
    if let Some(path) = &args.checkpoint {
        save_checkpoint(&model, path)?;
    }
    if let Some(path) = &args.out {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &report)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    write_lines(None, &report.records)?;
    write_lines(
        None,
        [json!({
            "epochs_run": report.epochs_run,
            "skipped": report.skipped,
            "best_epoch": report.best_epoch,
            "best_dev_accuracy": report.best_dev_accuracy,
        })],
    )
}

fn eval_command(args: &EvalArgs, bucket: Option<pathqa_core::train::BucketFn>) -> Result<()> {
    let mut model = load_checkpoint(&args.checkpoint, None)?;
    let mut config = args.model.apply(model.config.clone());
    if !config.shape_compatible(&model.config) {
        return Err(CliError::Usage("flags change parameter shapes stored in the checkpoint".into()));
    }
    let emb = embedder(&args.model, &mut config, true, HashEmbeddings::DEFAULT_STD)?;
    config.validate()?;
    echo(
        if bucket.is_some() { "analyze" } else { "eval" },
        json!({ "input": args.input, "checkpoint": args.checkpoint, "model": config, "bucket": bucket }),
    );
    model.config = config;
    let samples = load_samples(&args.input)?;
    let data = prepare_all(&samples, emb.as_ref(), &model.config)?;
    let report = match bucket {
        Some(f) => analyze_by_bucket(&model, &data, f),
        None => evaluate(&model, &data),
    };
    write_lines(args.out.as_deref(), [report])
}

fn sweep(args: &TrainArgs, layer_values: &[usize]) -> Result<()> {
    let inputs = train_inputs(args, "sweep-layers")?;
    let dev = inputs
        .dev
        .ok_or_else(|| CliError::Usage("sweep-layers needs --dev".into()))?;
    let points = sweep_layers(&inputs.train, &dev, &inputs.config, &args.train_config(), layer_values)?;
    write_lines(args.out.as_deref(), points)
}

fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let base = ModelConfig {
        d: 8,
        layers: 2,
        embed_dim: 8,
        max_path_docs: 3,
        init_seed: args.model.seed,
        ..ModelConfig::default()
    };
    let mut config = args.model.apply(base);
    // Unit-scale inputs keep every gradient entry above finite-difference noise.
    let emb = embedder(&args.model, &mut config, false, 1.0)?;
    config.validate()?;
    echo("gradcheck", json!({ "model": config, "epsilon": args.epsilon, "tolerance": args.tolerance }));
    let sample = match &args.input {
        Some(path) => load_samples(path)?.swap_remove(0),
        None => {
            let spec = SynthSpec {
                num_samples: 1,
                hop_depth: 1,
                num_distractor_docs: 1,
                num_candidates: 3,
                seed: args.model.seed,
                ..SynthSpec::default()
            };
            generate_corpus(&spec)?.swap_remove(0).sample
        }
    };
    let prepared = prepare_sample(&sample, emb.as_ref(), &config)?;
    let model = Model::new(config)?;
    let report = grad_check(&model.params, args.epsilon, |tape, leaves| -> pathqa_core::Result<Var> {
        let out = model.forward(tape, leaves, &prepared)?;
        out.loss.ok_or_else(|| Error::AnswerNotInGraph(prepared.id.clone()))
    })?;
    let passed = report.max_relative_error < args.tolerance;
    write_lines(
        None,
        [json!({
            "sample": prepared.id,
            "nodes": prepared.num_nodes,
            "max_relative_error": report.max_relative_error,
            "worst_param": report.worst_param,
            "worst_entry": report.worst_entry,
            "entries_checked": report.entries_checked,
            "passed": passed,
        })],
    )?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "max relative error {:e} exceeds tolerance {:e}",
            report.max_relative_error, args.tolerance
        )))
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_samples: args.samples,
        num_candidates: args.candidates,
        hop_depth: args.hops,
        num_distractor_docs: args.distractors,
        vocab_size: args.vocab,
        seed: args.seed,
        strict: !args.non_strict,
        multi_fact: args.multi_fact,
        decoys: args.decoys,
        filler_sentences: args.fillers,
    };
    echo("synth", json!({ "spec": spec, "out": args.out }));
    let corpus = generate_corpus(&spec).map_err(|e| match e {
        Error::VocabExhausted { .. } => CliError::Usage(e.to_string()),
        other => other.into(),
    })?;
    write_lines(args.out.as_deref(), corpus.iter().map(|s| s.sample.to_record()))?;
    let meta: Option<PathBuf> = args.meta.clone().or_else(|| {
        args.out.as_ref().map(|o| {
            let mut name = o.as_os_str().to_owned();
            name.push(".meta.jsonl");
            PathBuf::from(name)
        })
    });
    if let Some(path) = meta {
        write_lines(Some(&path), corpus.iter().map(|s| s.metadata()))?;
    }
    Ok(())
}
