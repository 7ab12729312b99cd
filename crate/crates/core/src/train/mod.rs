//! Loss, optimiser, training loop, checkpoints and the per-epoch log.

mod adam;
mod checkpoint;
mod log;
mod loss;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState, Moments};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use log::{EpochRecord, TrainingLog, LOG_HEADER};
pub use loss::{bce_loss, PROB_CLAMP};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PreprocessedSample, SplitAssignment, SplitName};
use crate::error::{Error, Result};
use crate::metrics::{metrics_from_counts, per_sample_counts, ConfusionCounts, EVAL_BATCH};
use crate::model::ModelGraph;
use crate::nn::Mode;
use crate::tensor::Tensor;

/// Threshold behind the logged accuracy and Dice values.
pub const LOG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    BestValDice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub checkpoint_policy: CheckpointPolicy,
    /// The last, smaller batch of an epoch is trained on rather than dropped.
    pub keep_partial_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            loss: LossKind::Bce,
            checkpoint_policy: CheckpointPolicy::BestValDice,
            keep_partial_batch: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.epochs < 1 {
            errs.push("epochs must be at least 1".to_string());
        }
        if self.batch_size < 1 {
            errs.push("batch_size must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (k, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("{k} must be in [0, 1), got {v}"));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            errs.push(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Number of optimiser steps per epoch for `n` training samples.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        if self.keep_partial_batch {
            n.div_ceil(self.batch_size)
        } else {
            n / self.batch_size
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    /// Snapshot at the epoch with the highest validation Dice.
    pub best: Checkpoint,
    pub steps: u64,
}

/// Generator for epoch `epoch` (1-based): one ChaCha stream per epoch so a
/// run can be resumed at an epoch boundary.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Trains `model` on the train split and selects by validation Dice.
pub fn train(
    model: &mut ModelGraph,
    splits: &SplitAssignment,
    data: &[PreprocessedSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_checkpoints(model, splits, data, config, None)
}

/// Where [`train_with_checkpoints`] writes the best checkpoint, and the
/// experiment echo stored in its metadata.
#[derive(Debug, Clone)]
pub struct CheckpointTarget<'a> {
    pub path: &'a Path,
    pub experiment: Option<serde_json::Value>,
}

/// [`train`], also writing the best checkpoint each time validation Dice
/// improves.
pub fn train_with_checkpoints(
    model: &mut ModelGraph,
    splits: &SplitAssignment,
    data: &[PreprocessedSample],
    config: &TrainConfig,
    target: Option<&CheckpointTarget<'_>>,
) -> Result<TrainOutcome> {
    config.validate().map_err(Error::InvalidConfig)?;
    let by_id: HashMap<&str, &PreprocessedSample> = data.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&PreprocessedSample>> {
        ids.iter()
            .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::UnknownSample(id.clone())))
            .collect()
    };
    let train_set = lookup(splits.ids(SplitName::Train))?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut val_set = lookup(splits.ids(SplitName::Val))?;
    if val_set.is_empty() {
        ::log::warn!("validation split is empty; validating on the training split");
        val_set = train_set.clone();
    }

    let adam_cfg = config.adam();
    let mut adam = AdamState::default();
    let mut log = TrainingLog::default();
    let mut best: Option<Checkpoint> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng);
        model.set_mode(Mode::Train);

        let (mut loss_sum, mut loss_pixels) = (0.0, 0usize);
        let mut counts = ConfusionCounts::default();
        let batches = config.steps_per_epoch(order.len());
        for (bi, idx) in order.chunks(config.batch_size).take(batches).enumerate() {
            let x = Tensor::stack(&idx.iter().map(|&i| &train_set[i].image).collect::<Vec<_>>())?;
            let y = Tensor::stack(&idx.iter().map(|&i| &train_set[i].mask).collect::<Vec<_>>())?;
            let trace = model.forward(&x, &mut rng)?;
            let (loss, grad) = bce_loss(trace.output(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi + 1 });
            }
            loss_sum += loss * y.len() as f64;
            loss_pixels += y.len();
            counts += confusion(trace.output(), &y)?;
            let tape = model.backward(&trace, &grad)?;
            drop(trace);
            adam_step(&mut model.params, &tape, &mut adam, &adam_cfg)?;
        }

        model.set_mode(Mode::Infer);
        let (val_loss, val_counts) = validate(model, &val_set)?;
        model.set_mode(Mode::Train);
        let val_scores = metrics_from_counts(&val_counts)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / loss_pixels.max(1) as f64,
            train_accuracy: metrics_from_counts(&counts)?.accuracy,
            val_loss,
            val_accuracy: val_scores.accuracy,
            val_dice: val_scores.dice,
        };
        ::log::info!(
            "epoch {epoch}/{}: train_loss {:.6} train_acc {:.4} val_loss {:.6} val_acc {:.4} val_dice {:.4}",
            config.epochs,
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy,
            record.val_dice
        );
        log.records.push(record);

        let improved = best.as_ref().and_then(|b| b.meta.val_dice).is_none_or(|d| record.val_dice > d);
        if improved {
            let mut ck = Checkpoint::new(model.clone(), adam.clone(), *config, epoch, Some(record.val_dice));
            if let Some(t) = target {
                ck.meta.experiment = t.experiment.clone();
                save_checkpoint(&ck, t.path)?;
            }
            best = Some(ck);
        }
    }

    Ok(TrainOutcome { log, best: best.expect("at least one epoch"), steps: adam.step })
}

fn confusion(pred: &Tensor, gt: &Tensor) -> Result<ConfusionCounts> {
    Ok(per_sample_counts(pred, gt, LOG_THRESHOLD)?.into_iter().sum())
}

/// Mean BCE and pooled counts over `samples` in inference mode.
fn validate(model: &ModelGraph, samples: &[&PreprocessedSample]) -> Result<(f64, ConfusionCounts)> {
    let (mut loss_sum, mut pixels) = (0.0, 0usize);
    let mut counts = ConfusionCounts::default();
    for chunk in samples.chunks(EVAL_BATCH) {
        let x = Tensor::stack(&chunk.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let y = Tensor::stack(&chunk.iter().map(|s| &s.mask).collect::<Vec<_>>())?;
        let p = model.infer(&x)?;
        let (loss, _) = bce_loss(&p, &y)?;
        loss_sum += loss * y.len() as f64;
        pixels += y.len();
        counts += confusion(&p, &y)?;
    }
    Ok((loss_sum / pixels.max(1) as f64, counts))
}
