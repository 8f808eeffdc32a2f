//! Mini-batch training, evaluation and analysis.

mod adam;
mod eval;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pathqa_autodiff::Tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use eval::{analyze_by_bucket, doc_count_bucket, evaluate, score_sample, BucketFn, BucketStat, EvalReport, Scored};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::ingest::Sample;
use crate::model::{prepare_sample, Model, ModelConfig, PreparedSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Global gradient-norm bound; off by default.
    pub clip: Option<f64>,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 30,
            seed: 7,
            adam: AdamConfig::default(),
            clip: None,
            patience: Some(5),
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Mean loss of every batch, in update order.
    pub batch_losses: Vec<f64>,
    /// Training samples left out because their answer has no node.
    pub skipped: usize,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept, when a dev set was given.
    pub best_epoch: Option<usize>,
    pub best_dev_accuracy: Option<f64>,
}

/// Prepares every sample, in parallel, keeping input order.
pub fn prepare_dataset(
    samples: &[Sample],
    embedder: &dyn EmbeddingProvider,
    config: &ModelConfig,
) -> Result<Vec<PreparedSample>> {
    samples.par_iter().map(|s| prepare_sample(s, embedder, config)).collect()
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Trains `model` in place. With a dev set, the parameters of the best dev
/// epoch are restored at the end.
pub fn train(
    model: &mut Model,
    train_set: &[PreparedSample],
    dev_set: Option<&[PreparedSample]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let threads = config.threads;
    with_pool(threads, || train_inner(model, train_set, dev_set, config))?
}

fn train_inner(
    model: &mut Model,
    train_set: &[PreparedSample],
    dev_set: Option<&[PreparedSample]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let usable: Vec<usize> = (0..train_set.len()).filter(|&i| train_set[i].answer_in_graph()).collect();
    let skipped = train_set.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if skipped > 0 {
        log::warn!("skipping {skipped} training samples whose answer has no mention node");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.adam, &model.params);
    let mut report = TrainReport {
        records: Vec::new(),
        batch_losses: Vec::new(),
        skipped,
        epochs_run: 0,
        best_epoch: None,
        best_dev_accuracy: None,
    };
    let mut best_params = None;
    let mut order = usable;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let current: &Model = model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| current.loss_and_gradients(&train_set[i]))
                .collect::<Result<_>>()?;
            let mut grads: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
            let mut batch_loss = 0.0;
            for (r, &i) in results.iter().zip(batch) {
                batch_loss += r.loss;
                correct += usize::from(Some(r.predicted) == train_set[i].answer);
                for (g, rg) in grads.iter_mut().zip(&r.grads) {
                    g.add_assign(rg);
                }
            }
            let n = batch.len() as f64;
            for g in &mut grads {
                for x in g.data_mut() {
                    *x /= n;
                }
            }
            if let Some(c) = config.clip {
                clip_global_norm(&mut grads, c);
            }
            adam.step(&mut model.params, &grads)?;
            loss_sum += batch_loss;
            report.batch_losses.push(batch_loss / n);
        }
        let train_record = EpochRecord {
            epoch,
            split: "train".into(),
            loss: Some(loss_sum / order.len() as f64),
            accuracy: correct as f64 / order.len() as f64,
        };
        log::info!("{}", serde_json::to_string(&train_record)?);
        report.records.push(train_record);
        report.epochs_run = epoch;

        if let Some(dev) = dev_set {
            let eval = evaluate(model, dev);
            let dev_record = EpochRecord {
                epoch,
                split: "dev".into(),
                loss: None,
                accuracy: eval.accuracy,
            };
            log::info!("{}", serde_json::to_string(&dev_record)?);
            report.records.push(dev_record);
            if report.best_dev_accuracy.is_none_or(|b| eval.accuracy > b) {
                report.best_dev_accuracy = Some(eval.accuracy);
                report.best_epoch = Some(epoch);
                best_params = Some(model.params.clone());
            }
            if let (Some(p), Some(best)) = (config.patience, report.best_epoch) {
                if epoch - best >= p {
                    break;
                }
            }
        }
    }
    if let Some(p) = best_params {
        model.params = p;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub layers: usize,
    pub dev_accuracy: f64,
    pub num_parameters: usize,
    pub epochs_run: usize,
}

/// Trains one model per layer count from the same initialization and seed.
/// Graph inputs do not depend on the layer count, so `train_set` and
/// `dev_set` are shared.
pub fn sweep_layers(
    train_set: &[PreparedSample],
    dev_set: &[PreparedSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    layer_values: &[usize],
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(layer_values.len());
    for &layers in layer_values {
        if layers == 0 {
            return Err(Error::Config("layer counts must be at least 1".into()));
        }
        let mut model = Model::new(ModelConfig {
            layers,
            ..model_config.clone()
        })?;
        let report = train(&mut model, train_set, Some(dev_set), train_config)?;
        let dev_accuracy = evaluate(&model, dev_set).accuracy;
        log::info!("layers={layers} dev_accuracy={dev_accuracy:.4}");
        out.push(SweepPoint {
            layers,
            dev_accuracy,
            num_parameters: model.num_parameters(),
            epochs_run: report.epochs_run,
        });
    }
    Ok(out)
}
