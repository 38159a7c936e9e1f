//! Mini-batch Adam training with validation-F1 model selection.

mod checkpoint;
mod config;

pub use checkpoint::{
    decode_params, encode_params, load_checkpoint, save_checkpoint, sidecar, Checkpoint, CheckpointError,
    CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use config::{parse_config, RunConfig, TrainConfig};
pub use crate::evaluation::ensemble;

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Example, SurfaceTuple, Vocabulary, WordVectors};
use crate::encoder::ModelConfig;
use crate::evaluation::score;
use crate::model::Model;
use crate::ndcore::{AdamState, Graph, Gradients, ParameterStore};
use crate::word_decoder::GenerationDiagnostics;
use crate::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}, training example {example}")]
    NonFiniteLoss { epoch: usize, batch: usize, example: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_precision: f64,
    pub valid_recall: f64,
    pub valid_f1: f64,
    pub best_f1: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub stopped_early: bool,
}

/// Seed for example `index` of `epoch`: independent of batch layout and
/// of the worker that computes it.
fn example_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rand::RngCore::next_u64(&mut rng)
}

/// Loss and gradients of one example on its own graph.
fn example_gradients(
    model: &Model,
    store: &ParameterStore<f32>,
    example: &Example,
    seed: u64,
) -> Result<(f64, Gradients<f32>), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(store);
    let loss = model.loss(&mut g, example, true, &mut rng)?;
    let value = g.value(loss).item() as f64;
    Ok((value, g.backward(loss)?))
}

/// Predictions for every sentence, in order.
pub fn predict_all(
    model: &Model,
    store: &ParameterStore<f32>,
    examples: &[Example],
) -> Result<(Vec<BTreeSet<SurfaceTuple>>, GenerationDiagnostics), ModelError> {
    let preds: Vec<_> = examples
        .par_iter()
        .map(|ex| model.predict(store, &ex.sentence))
        .collect::<Result<_, _>>()?;
    let mut diag = GenerationDiagnostics::default();
    let sets = preds
        .into_iter()
        .map(|p| {
            diag.add(&p.diagnostics);
            p.tuples
        })
        .collect();
    Ok((sets, diag))
}

pub fn validation_f1(model: &Model, store: &ParameterStore<f32>, valid: &[Example]) -> Result<crate::evaluation::Prf, ModelError> {
    let (pred, _) = predict_all(model, store, valid)?;
    let gold: Vec<_> = valid.iter().map(Example::surface_set).collect();
    Ok(score(&pred, &gold).expect("same length").overall)
}

/// Trains one model; `on_epoch` sees each metrics line as it is produced.
pub fn train(
    train_set: &[Example],
    valid_set: &[Example],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    vectors: Option<&WordVectors>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    cfg.validate()?;
    let train_sentences: HashSet<&[String]> = train_set.iter().map(|e| e.sentence.tokens.as_slice()).collect();
    let shared = valid_set.iter().filter(|e| train_sentences.contains(e.sentence.tokens.as_slice())).count();
    if shared > 0 {
        log::warn!("{shared} validation sentences also occur in the training split");
    }

    let vocab = Vocabulary::build(train_set, model_cfg.min_freq);
    let model = Model::new(model_cfg.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store: ParameterStore<f32> = model.init(vectors, &mut rng)?;
    let mut adam = AdamState::new(cfg.learning_rate);

    let mut best = (f64::NEG_INFINITY, 0usize, store.clone());
    let mut metrics = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs_max {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Gradients<f32>)> = chunk
                .par_iter()
                .map(|&i| example_gradients(&model, &store, &train_set[i], example_seed(cfg.seed, epoch, i)))
                .collect::<Result<_, _>>()?;
            let mut total = Gradients::zeros_like(&store);
            for (&i, (loss, grads)) in chunk.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch, example: i });
                }
                loss_sum += loss;
                total.accumulate(grads);
            }
            total.scale(1.0 / chunk.len() as f32);
            adam.step(&mut store, &total).map_err(ModelError::from)?;
        }
        let valid = validation_f1(&model, &store, valid_set)?;
        let improved = valid.f1 > best.0;
        if improved {
            best = (valid.f1, epoch, store.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            valid_precision: valid.precision,
            valid_recall: valid.recall,
            valid_f1: valid.f1,
            best_f1: best.0,
            improved,
        };
        on_epoch(&m);
        metrics.push(m);
        if stale >= cfg.patience && epoch < cfg.epochs_max {
            stopped_early = true;
            break;
        }
    }

    let (valid_f1, epoch, params) = best;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        vocab_digest: model.vocab.digest(),
        epoch,
        valid_f1,
        seed: cfg.seed,
    };
    Ok(TrainOutcome { checkpoint: Checkpoint { params, vocab: model.vocab, meta }, metrics, stopped_early })
}
