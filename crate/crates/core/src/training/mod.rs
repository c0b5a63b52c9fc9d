//! Minibatch training: Adam, plateau scheduling, early stopping and the
//! validation metrics that drive them.

pub mod adam;
pub mod metrics;
pub mod schedule;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EncodedDataset;
use crate::model::{mean_logloss, DropoutKey, Mode, Model};
use crate::seed;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use metrics::auc;
pub use schedule::{early_stop, reduce_lr_on_plateau, EarlyStopper, Monitor, PlateauScheduler, StopDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub monitor: Monitor,
    /// Write wall-clock seconds into the epoch log. Off makes logs
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4096,
            plateau_patience: 3,
            plateau_factor: 0.1,
            early_stop_patience: 5,
            max_epochs: 100,
            seed: 2023,
            monitor: Monitor::ValidationAuc,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config("plateau_factor must be in (0, 1)"));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("patiences must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_logloss: f64,
    pub val_logloss: f64,
    pub val_auc: Option<f64>,
    pub seconds: Option<f64>,
}

pub fn write_epoch_log<W: Write>(mut w: W, log: &[EpochRecord]) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: Option<f64>,
    pub logloss: f64,
    pub n: usize,
}

pub fn rows_of(ds: &EncodedDataset) -> Vec<&[u32]> {
    (0..ds.len()).map(|i| ds.row(i)).collect()
}

/// AUC (when both classes are present) and LogLoss at inference.
pub fn evaluate(model: &Model, ds: &EncodedDataset) -> Result<EvalMetrics> {
    let probs = model.predict(&rows_of(ds))?;
    let logloss = mean_logloss(&probs, &ds.labels)?;
    let auc = match metrics::auc(&probs, &ds.labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalMetrics {
        auc,
        logloss,
        n: ds.len(),
    })
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Owns the model and optimizer state across epochs. On error the best
/// model seen so far (or the initial one) is still available.
pub struct Trainer {
    pub cfg: TrainConfig,
    model: Model,
    best: Model,
    adam: AdamState,
    scheduler: PlateauScheduler,
    stopper: EarlyStopper,
    log: Vec<EpochRecord>,
    step: u64,
}

impl Trainer {
    pub fn new(mut model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        let adam = AdamState::new(&mut model, AdamConfig::default());
        Ok(Trainer {
            scheduler: PlateauScheduler::new(cfg.monitor, cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor),
            stopper: EarlyStopper::new(cfg.monitor, cfg.early_stop_patience),
            best: model.clone(),
            model,
            adam,
            cfg,
            log: Vec::new(),
            step: 0,
        })
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    /// Best model so far; the initial model before any epoch completes.
    pub fn best_model(&self) -> &Model {
        &self.best
    }

    fn run_epoch(&mut self, epoch: usize, train: &EncodedDataset) -> Result<f64> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(self.cfg.seed, "shuffle", &[epoch as u64]));
        let dropout_seed = seed::derive(self.cfg.seed, "dropout", &[]);
        let lr = self.scheduler.lr;
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let rows: Vec<&[u32]> = chunk.iter().map(|&i| train.row(i)).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train.labels[i]).collect();
            let key = DropoutKey {
                seed: dropout_seed,
                step: self.step,
            };
            let trace = self.model.forward_batch(&rows, Mode::Train(key))?;
            let grads = self.model.backward(&trace, &labels)?;
            if !grads.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, step {}",
                    self.step
                )));
            }
            total += grads.loss * chunk.len() as f64;
            self.adam.apply(&mut self.model, &grads, lr)?;
            self.step += 1;
        }
        Ok(total / train.len().max(1) as f64)
    }

    /// Trains until early stopping or `max_epochs`; returns true if stopped early.
    pub fn run(&mut self, train: &EncodedDataset, valid: &EncodedDataset) -> Result<bool> {
        if self.cfg.max_epochs == 0 {
            return Ok(false);
        }
        if train.is_empty() || valid.is_empty() {
            return Err(Error::config("training and validation sets must be non-empty"));
        }
        let sizes = self.model.topology.field_sizes.clone();
        train.validate(&sizes)?;
        valid.validate(&sizes)?;
        for epoch in self.log.len() + 1..=self.cfg.max_epochs {
            let started = Instant::now();
            let lr = self.scheduler.lr;
            let train_logloss = self.run_epoch(epoch, train)?;
            let val = evaluate(&self.model, valid)?;
            if !val.logloss.is_finite() {
                return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
            }
            let metric = match self.cfg.monitor {
                Monitor::ValidationAuc => val
                    .auc
                    .ok_or_else(|| Error::UndefinedMetric("validation set has a single class".into()))?,
                Monitor::ValidationLogLoss => val.logloss,
            };
            self.log.push(EpochRecord {
                epoch,
                lr,
                train_logloss,
                val_logloss: val.logloss,
                val_auc: val.auc,
                seconds: self.cfg.record_timing.then(|| started.elapsed().as_secs_f64()),
            });
            self.scheduler.observe(metric);
            let (improved, decision) = self.stopper.observe(metric);
            if improved {
                self.best = self.model.clone();
            }
            if let StopDecision::Stop { .. } = decision {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            best_epoch: self.stopper.best_epoch(),
            model: self.best,
            log: self.log,
        }
    }
}

/// Trains and returns the best-epoch model with the epoch log.
pub fn train(model: Model, train: &EncodedDataset, valid: &EncodedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(model, cfg.clone())?;
    t.run(train, valid)?;
    Ok(t.into_outcome())
}
