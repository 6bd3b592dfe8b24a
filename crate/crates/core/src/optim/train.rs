use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::model::{AeGrads, SpatioTemporalAE, VideoVolume};
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Volumes whose gradients are computed concurrently before being summed in
/// order. Fixed so results do not depend on the thread count.
const GRADIENT_CHUNK: usize = 8;

/// A model the training loop can fit.
pub trait Trainable<S: Scalar>: Parameters<S> + Clone + Sync {
    type Grads: Parameters<S> + Send;

    fn loss(&self, input: &Tensor<S>) -> Result<S>;

    fn loss_and_gradients(&self, input: &Tensor<S>) -> Result<(S, Self::Grads)>;
}

impl<S: Scalar> Trainable<S> for SpatioTemporalAE<S> {
    type Grads = AeGrads<S>;

    fn loss(&self, input: &Tensor<S>) -> Result<S> {
        SpatioTemporalAE::loss(self, input)
    }

    fn loss_and_gradients(&self, input: &Tensor<S>) -> Result<(S, AeGrads<S>)> {
        SpatioTemporalAE::loss_and_gradients(self, input)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without a strict validation improvement before stopping.
    pub patience: usize,
    /// Fraction of volumes, taken from the end, held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: 64,
            max_epochs: 50,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must all be at least 1".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.adam.validate()
    }

    /// Number of volumes held out from `n`, at least one and leaving at least one.
    pub fn validation_count(&self, n: usize) -> usize {
        ((n as f64 * self.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` epochs in a row
/// without a strict improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Stale
            }
        }
    }
}

/// Seeded per-epoch permutations of the training set.
#[derive(Clone, Debug)]
pub struct EpochShuffler {
    rng: ChaCha8Rng,
}

impl EpochShuffler {
    pub fn new(seed: u64) -> Self {
        EpochShuffler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-volume loss over the epoch's mini-batches, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// Training-set loss of the returned (best-validation) parameters.
    pub final_train_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub early_stopped: bool,
    pub warnings: Vec<String>,
}

fn mean_loss<S: Scalar, M: Trainable<S>>(model: &M, volumes: &[&VideoVolume<S>]) -> Result<f64> {
    let losses = volumes
        .par_iter()
        .map(|v| model.loss(&v.frames))
        .collect::<Result<Vec<S>>>()?;
    let total: f64 = losses.iter().map(|l| l.as_f64()).sum();
    let mean = total / volumes.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(mean)
}

/// Averaged gradient and summed loss over one mini-batch.
fn batch_gradient<S: Scalar, M: Trainable<S>>(model: &M, batch: &[&VideoVolume<S>]) -> Result<(f64, M::Grads)> {
    let mut total: Option<M::Grads> = None;
    let mut loss_sum = 0.0;
    for chunk in batch.chunks(GRADIENT_CHUNK) {
        let parts = chunk
            .par_iter()
            .map(|v| model.loss_and_gradients(&v.frames))
            .collect::<Result<Vec<_>>>()?;
        for (loss, g) in parts {
            loss_sum += loss.as_f64();
            match total.as_mut() {
                Some(acc) => acc.accumulate(&g),
                None => total = Some(g),
            }
        }
    }
    let mut grads = total.ok_or_else(|| Error::Input("empty mini-batch".into()))?;
    grads.scale_in_place(S::of(1.0 / batch.len() as f64));
    Ok((loss_sum, grads))
}

/// Splits off the last `validation_fraction` of `volumes` and calls
/// [`train_with_validation`].
pub fn train<S, M, F>(model: &mut M, volumes: &[VideoVolume<S>], settings: &TrainSettings, on_improve: F) -> Result<TrainReport>
where
    S: Scalar,
    M: Trainable<S>,
    F: FnMut(&M, usize) -> Result<()>,
{
    settings.validate()?;
    if volumes.len() < 2 {
        return Err(Error::Input(format!(
            "need at least two volumes to split off validation data, got {}",
            volumes.len()
        )));
    }
    let n_val = settings.validation_count(volumes.len());
    let (tr, val) = volumes.split_at(volumes.len() - n_val);
    train_with_validation(model, tr, val, settings, on_improve)
}

/// Mini-batch Adam with per-epoch shuffling and early stopping on the
/// validation loss. `model` ends up holding the best-validation parameters;
/// `on_improve` sees the model after every epoch that improved on the best.
pub fn train_with_validation<S, M, F>(
    model: &mut M,
    training: &[VideoVolume<S>],
    validation: &[VideoVolume<S>],
    settings: &TrainSettings,
    mut on_improve: F,
) -> Result<TrainReport>
where
    S: Scalar,
    M: Trainable<S>,
    F: FnMut(&M, usize) -> Result<()>,
{
    settings.validate()?;
    if training.is_empty() || validation.is_empty() {
        return Err(Error::Input(format!(
            "{} training and {} validation volumes; both must be non-empty",
            training.len(),
            validation.len()
        )));
    }
    let mut warnings = Vec::new();
    let mut batch_size = settings.batch_size;
    if batch_size > training.len() {
        let msg = format!(
            "batch size {batch_size} exceeds the {} training volumes; using full-batch updates",
            training.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
        batch_size = training.len();
    }

    let train_refs: Vec<&VideoVolume<S>> = training.iter().collect();
    let val_refs: Vec<&VideoVolume<S>> = validation.iter().collect();
    let initial_train_loss = mean_loss(model, &train_refs)?;
    let initial_val_loss = mean_loss(model, &val_refs)?;
    log::info!("initial loss: train {initial_train_loss:.6}, validation {initial_val_loss:.6}");

    let mut adam = AdamState::new(&*model, settings.adam);
    let mut shuffler = EpochShuffler::new(settings.seed);
    let mut stopper = EarlyStopping::new(settings.patience);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut early_stopped = false;

    for epoch in 1..=settings.max_epochs {
        let order = shuffler.next_order(training.len());
        let mut loss_sum = 0.0;
        for idx in order.chunks(batch_size) {
            let batch: Vec<&VideoVolume<S>> = idx.iter().map(|&i| &training[i]).collect();
            let (batch_loss, grads) = batch_gradient(&*model, &batch)?;
            loss_sum += batch_loss;
            adam_step(model, &grads, &mut adam)?;
        }
        let train_loss = loss_sum / training.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let val_loss = mean_loss(&*model, &val_refs)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        log::info!("epoch {epoch}: train {train_loss:.6}, validation {val_loss:.6}");

        match stopper.observe(val_loss) {
            Verdict::Improved => {
                best = model.clone();
                best_epoch = epoch;
                on_improve(&*model, epoch)?;
            }
            Verdict::Stale => {}
            Verdict::Stop => {
                log::info!("no validation improvement for {} epochs; stopping", settings.patience);
                early_stopped = true;
                break;
            }
        }
    }

    *model = best;
    let final_train_loss = mean_loss(&*model, &train_refs)?;
    Ok(TrainReport {
        initial_train_loss,
        initial_val_loss,
        final_train_loss,
        best_val_loss: stopper.best,
        best_epoch,
        history,
        early_stopped,
        warnings,
    })
}

/// `epoch,train_loss,val_loss` with a header row.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for r in history {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
