//! Mini-batch training with best-validation selection.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Precision, Real, Tape, Var};
use crate::energy::{EnergyModel, EnergySample};
use crate::error::{Error, Result};
use crate::force::{ForceModel, ForceSample};
use crate::loss::{ImportanceParams, LossKind};
use crate::nn::Mode;
use crate::optim::{Adam, OptimizerConfig};

/// Everything about an optimization run except the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub importance: ImportanceParams,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::WeightedMse,
            importance: ImportanceParams::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            epochs: 80,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.importance.validate()?;
        self.optimizer.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-structure loss over the epoch's training passes.
    pub train_loss: f64,
    /// Mean per-structure loss on the validation split, dropout off.
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub log: Vec<EpochRecord>,
    /// Validation loss of the initial weights.
    pub initial_val_loss: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// A model the training loop can optimize.
pub trait Trainable<T: Real> {
    type Sample;

    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    /// Size used to bucket samples into batches.
    fn sample_len(sample: &Self::Sample) -> usize;
    /// Scalar loss of one sample.
    fn sample_loss(&self, tape: &mut Tape<T>, sample: &Self::Sample, mode: &mut Mode<'_>) -> Result<Var>;
}

impl<T: Real> Trainable<T> for ForceModel<T> {
    type Sample = ForceSample<T>;

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn sample_len(sample: &ForceSample<T>) -> usize {
        sample.tokens.rows()
    }

    fn sample_loss(&self, tape: &mut Tape<T>, sample: &ForceSample<T>, mode: &mut Mode<'_>) -> Result<Var> {
        ForceModel::sample_loss(self, tape, sample, mode)
    }
}

impl<T: Real> Trainable<T> for EnergyModel<T> {
    type Sample = EnergySample<T>;

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn sample_len(sample: &EnergySample<T>) -> usize {
        sample.input.rows()
    }

    fn sample_loss(&self, tape: &mut Tape<T>, sample: &EnergySample<T>, mode: &mut Mode<'_>) -> Result<Var> {
        EnergyModel::sample_loss(self, tape, sample, mode)
    }
}

/// Hooks into [`fit`]: a clock for the log and a per-epoch callback, used
/// for progress output and checkpointing.
pub trait FitObserver<T> {
    /// Seconds since an arbitrary origin.
    fn now(&mut self) -> f64 {
        0.0
    }

    fn epoch_end(&mut self, _record: &EpochRecord, _params: &ParamStore<T>, _improved: bool) -> Result<()> {
        Ok(())
    }
}

impl<T> FitObserver<T> for () {}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    mix(mix(mix(seed) ^ epoch as u64) ^ step as u64)
}

/// Batches of similar-sized samples. Indices are shuffled, stably sorted
/// by size, cut into batches, and the batch order is shuffled again.
pub fn bucket_batches(sizes: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| sizes[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Mean per-sample loss with dropout off.
pub fn mean_loss<T: Real, M: Trainable<T>>(model: &M, samples: &[M::Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let loss = model.sample_loss(&mut tape, s, &mut Mode::Eval)?;
        total += tape.value(loss).get(0, 0).as_f64();
    }
    Ok(total / samples.len() as f64)
}

/// Runs `cfg.epochs` epochs of Adam over `train`, evaluating `validation`
/// after each epoch. On return the model holds the weights of the epoch
/// with the lowest validation loss. An empty validation split selects on
/// training loss instead. A non-finite loss aborts with
/// [`Error::DivergedLoss`], leaving the best weights seen so far in place.
pub fn fit<T: Real, M: Trainable<T>>(
    model: &mut M,
    train: &[M::Sample],
    validation: &[M::Sample],
    cfg: &TrainConfig,
    observer: &mut dyn FitObserver<T>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::NoLabels("training"));
    }
    let selection = if validation.is_empty() { train } else { validation };
    let mut optimizer = Adam::new(cfg.optimizer.clone(), model.params());
    let initial_val_loss = mean_loss(model, selection)?;
    let mut best = model.params().clone();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut log = Vec::with_capacity(cfg.epochs);
    let sizes: Vec<usize> = train.iter().map(M::sample_len).collect();
    let scale = T::of(1.0);
    for epoch in 1..=cfg.epochs {
        let started = observer.now();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch, usize::MAX));
        let batches = bucket_batches(&sizes, cfg.batch_size, &mut rng);
        let mut epoch_loss = 0.0;
        let diverged = |model: &mut M, best: &ParamStore<T>| {
            model.params_mut().copy_values_from(best);
            Error::DivergedLoss { epoch }
        };
        for (step, batch) in batches.iter().enumerate() {
            model.params_mut().zero_grads();
            let inv = scale / T::of(batch.len() as f64);
            for (k, &i) in batch.iter().enumerate() {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch, step * cfg.batch_size + k));
                let mut mode = Mode::Train(&mut drop_rng);
                let mut tape = Tape::new();
                let loss = match model.sample_loss(&mut tape, &train[i], &mut mode) {
                    Ok(l) => l,
                    Err(Error::NumericError { .. }) => return Err(diverged(model, &best)),
                    Err(e) => return Err(e),
                };
                let value = tape.value(loss).get(0, 0).as_f64();
                if !value.is_finite() {
                    return Err(diverged(model, &best));
                }
                epoch_loss += value;
                match tape.backward_scaled(loss, inv, model.params_mut()) {
                    Ok(_) => {}
                    Err(Error::NumericError { .. }) => return Err(diverged(model, &best)),
                    Err(e) => return Err(e),
                }
            }
            optimizer.step(model.params_mut());
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = match mean_loss(model, selection) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NumericError { .. }) => return Err(diverged(model, &best)),
            Err(e) => return Err(e),
        };
        let improved = val_loss < best_val_loss;
        if improved {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best.copy_values_from(model.params());
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: observer.now() - started,
        };
        observer.epoch_end(&record, model.params(), improved)?;
        log.push(record);
    }
    model.params_mut().copy_values_from(&best);
    Ok(FitOutcome {
        log,
        initial_val_loss,
        best_epoch,
        best_val_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_every_index_once() {
        let sizes = [5, 3, 5, 64, 3, 3, 65, 5, 64];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = bucket_batches(&sizes, 3, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..sizes.len()).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.len() <= 3);
        }
        // With sizes sorted before cutting, the three 3-atom samples share a batch.
        assert!(batches.iter().any(|b| b.iter().all(|&i| sizes[i] == 3) && b.len() == 3));
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 1, 0), stream_seed(1, 1, 1));
        assert_ne!(stream_seed(1, 1, 0), stream_seed(1, 2, 0));
        assert_eq!(stream_seed(3, 4, 5), stream_seed(3, 4, 5));
    }
}
