use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_cross_entropy, Mode, Sequential, SgdMomentum};
use crate::error::{Error, Result};
use crate::eval::EpochRecord;
use crate::tensor::{Scalar, Tensor};

/// RNG stream used by weight initialization.
pub const INIT_STREAM: u64 = 0;
/// RNG stream used for shuffling and dropout masks.
pub const TRAIN_STREAM: u64 = 1;

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` after every `every` epochs.
    StepDecay { every: usize, factor: f64 },
}

impl LrSchedule {
    /// Rate for 1-based `epoch`.
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { every, factor } => {
                let steps = (epoch.saturating_sub(1) / every.max(1)) as i32;
                base * factor.powi(steps)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub schedule: LrSchedule,
}

impl TrainConfig {
    pub fn mlp() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 42,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn cnn() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            schedule: LrSchedule::StepDecay { every: 10, factor: 0.5 },
            ..Self::mlp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Borrowed training inputs: a batch-major input tensor with matching labels.
#[derive(Clone, Copy)]
pub struct TrainData<'a, T: Scalar> {
    pub inputs: &'a Tensor<T>,
    pub one_hot: &'a Tensor<T>,
    pub labels: &'a [u8],
}

impl<'a, T: Scalar> TrainData<'a, T> {
    pub fn new(inputs: &'a Tensor<T>, one_hot: &'a Tensor<T>, labels: &'a [u8]) -> Result<Self> {
        let n = inputs.outer_len();
        if one_hot.outer_len() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} inputs, {} targets, {} labels",
                one_hot.outer_len(),
                labels.len()
            )));
        }
        Ok(TrainData { inputs, one_hot, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One shuffled pass in mini-batches. Records the sample-weighted mean
/// training loss and the accuracy of the training-mode predictions.
pub fn train_epoch<T: Scalar>(
    stack: &mut Sequential<T>,
    optimizer: &mut SgdMomentum<T>,
    data: TrainData<'_, T>,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut dyn RngCore,
) -> Result<EpochRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    optimizer.learning_rate = cfg.schedule.rate(cfg.learning_rate, epoch);

    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        let x = data.inputs.gather_outer(batch)?;
        let y = data.one_hot.gather_outer(batch)?;
        let logits = stack.forward(&x, Mode::Train, rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
        loss_sum += loss * batch.len() as f64;
        correct += logits
            .argmax_rows()?
            .iter()
            .zip(batch)
            .filter(|(&p, &i)| p == data.labels[i] as usize)
            .count();
        stack.backward(&grad)?;
        optimizer.step(stack)?;
    }
    Ok(EpochRecord {
        epoch,
        loss: loss_sum / n as f64,
        accuracy: correct as f64 / n as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` after each one.
pub fn fit_with<T: Scalar>(
    stack: &mut Sequential<T>,
    data: TrainData<'_, T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("cannot train on an empty dataset".into()));
    }
    let mut rng = stream_rng(cfg.seed, TRAIN_STREAM);
    let mut optimizer = SgdMomentum::new(cfg.learning_rate, cfg.momentum)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let record = train_epoch(stack, &mut optimizer, data, cfg, epoch, &mut rng)?;
        on_epoch(&record);
        history.push(record);
    }
    Ok(history)
}

pub fn fit<T: Scalar>(stack: &mut Sequential<T>, data: TrainData<'_, T>, cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    fit_with(stack, data, cfg, |_| {})
}

/// Mean evaluation-mode loss over a dataset.
pub fn mean_loss<T: Scalar>(stack: &Sequential<T>, data: TrainData<'_, T>, batch_size: usize) -> Result<f64> {
    let n = data.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let logits = stack.infer(&data.inputs.slice_outer(start, end)?)?;
        let (loss, _) = softmax_cross_entropy(&logits, &data.one_hot.slice_outer(start, end)?)?;
        total += loss * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_halves_every_ten_epochs() {
        let s = LrSchedule::StepDecay { every: 10, factor: 0.5 };
        assert_eq!(s.rate(0.05, 1), 0.05);
        assert_eq!(s.rate(0.05, 10), 0.05);
        assert_eq!(s.rate(0.05, 11), 0.025);
        assert_eq!(s.rate(0.05, 30), 0.0125);
        assert_eq!(LrSchedule::Constant.rate(0.01, 29), 0.01);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::mlp().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::mlp() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::mlp() }.validate().is_err());
    }
}
