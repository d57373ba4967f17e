//! Mini-batch Adam training with early stopping on dev loss.

mod adam;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FrameMatrix;
use crate::network::{backward, forward_batch, init_params, loss, Architecture, NetworkParams};
use crate::seed;
use crate::targets::TargetVector;

pub use adam::{adam_step, adam_update, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 8,
            max_epochs: 25,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 5,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Validation("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Validation("patience cannot exceed max_epochs".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Validation("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A length-normalized utterance with its supervision.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub frames: FrameMatrix,
    pub target: TargetVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest dev loss (earliest on ties).
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    /// Losses without wall-clock times, for reproducibility checks.
    pub fn losses(&self) -> Vec<(f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.dev_loss)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,dev_loss,seconds\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.6},{:.6},{:.3}\n", e.epoch, e.train_loss, e.dev_loss, e.seconds));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

const EVAL_BATCH: usize = 16;

fn check_examples(set: &[Example], name: &str, arch: &Architecture) -> Result<usize> {
    let len = set
        .first()
        .ok_or_else(|| Error::Validation(format!("{name} split is empty")))?
        .frames
        .num_frames();
    for ex in set {
        if ex.frames.num_frames() != len {
            return Err(Error::Dimension(format!(
                "{} has {} frames but {name} examples are {len} frames; apply fit_length first",
                ex.id,
                ex.frames.num_frames()
            )));
        }
        if ex.target.len() != arch.outputs {
            return Err(Error::Dimension(format!(
                "target for {} has {} entries, network has {} outputs",
                ex.id,
                ex.target.len(),
                arch.outputs
            )));
        }
    }
    Ok(len)
}

/// Mean per-utterance summed cross-entropy.
pub fn mean_loss(params: &NetworkParams<f32>, set: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in set.chunks(EVAL_BATCH) {
        let frames: Vec<&FrameMatrix> = chunk.iter().map(|e| &e.frames).collect();
        let trace = forward_batch(params, &frames)?;
        for (scores, ex) in trace.scores().iter().zip(chunk) {
            total += loss(scores, ex.target.values())?;
        }
    }
    Ok(total / set.len() as f64)
}

/// Trains from a seeded initialization and returns the parameters of the
/// epoch with the lowest dev loss.
pub fn train(
    train_set: &[Example],
    dev_set: &[Example],
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(NetworkParams<f32>, TrainHistory)> {
    config.validate()?;
    check_examples(train_set, "train", &arch)?;
    check_examples(dev_set, "dev", &arch)?;

    let mut params: NetworkParams<f32> = init_params(arch, seed::derive(config.seed, "init"))?;
    let mut state = AdamState::for_params(&params);
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, NetworkParams<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut train_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let frames: Vec<&FrameMatrix> = batch.iter().map(|&i| &train_set[i].frames).collect();
            let targets: Vec<&[f32]> = batch.iter().map(|&i| train_set[i].target.values()).collect();
            let trace = forward_batch(&params, &frames)?;
            for (scores, t) in trace.scores().iter().zip(&targets) {
                train_total += loss(scores, t)?;
            }
            // Mean over the batch.
            let grads = backward(&params, &trace, &targets, 1.0 / batch.len() as f32)?;
            adam_step(&mut params, &grads, &mut state, config)?;
        }
        let dev_loss = mean_loss(&params, dev_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: train_total / train_set.len() as f64,
            dev_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev loss {:.4} ({:.1}s)",
            record.train_loss,
            record.dev_loss,
            record.seconds
        );
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(b, _)| dev_loss < *b) {
            best = Some((dev_loss, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                log::info!("early stop after epoch {epoch}; best epoch {}", history.best_epoch);
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok((params, history))
}
