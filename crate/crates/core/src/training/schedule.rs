//! Epoch-level Reduce-LR-On-Plateau and early stopping.
//!
//! Both are pure functions of the monitored metric history; the stateful
//! trackers below are what the training loop drives, and the free functions
//! replay a full history through them.

use serde::{Deserialize, Serialize};

/// Minimum change that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Validation AUC, higher is better.
    #[default]
    ValidationAuc,
    /// Validation LogLoss, lower is better.
    ValidationLogLoss,
}

impl Monitor {
    pub fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            Monitor::ValidationAuc => candidate >= best + IMPROVEMENT_EPS,
            Monitor::ValidationLogLoss => candidate <= best - IMPROVEMENT_EPS,
        }
    }
}

impl std::str::FromStr for Monitor {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "auc" => Ok(Monitor::ValidationAuc),
            "logloss" => Ok(Monitor::ValidationLogLoss),
            other => Err(crate::Error::config(format!("unknown monitor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub monitor: Monitor,
    pub patience: usize,
    pub factor: f64,
    pub lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(monitor: Monitor, lr: f64, patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            monitor,
            patience,
            factor,
            lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch and returns the learning rate for the next one.
    pub fn observe(&mut self, metric: f64) -> f64 {
        match self.best {
            Some(best) if !self.monitor.improves(metric, best) => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.lr *= self.factor;
                    self.bad_epochs = 0;
                }
            }
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

pub fn reduce_lr_on_plateau(history: &[f64], monitor: Monitor, lr: f64, patience: usize, factor: f64) -> f64 {
    let mut s = PlateauScheduler::new(monitor, lr, patience, factor);
    for &m in history {
        s.observe(m);
    }
    s.lr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    /// Epochs are 1-based.
    Stop { best_epoch: usize },
}

#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub monitor: Monitor,
    pub patience: usize,
    best: Option<(usize, f64)>,
    epochs: usize,
    bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(monitor: Monitor, patience: usize) -> Self {
        EarlyStopper {
            monitor,
            patience,
            best: None,
            epochs: 0,
            bad_epochs: 0,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best.map(|(_, m)| m)
    }

    /// Returns whether `metric` was a new best alongside the decision.
    pub fn observe(&mut self, metric: f64) -> (bool, StopDecision) {
        self.epochs += 1;
        let improved = match self.best {
            Some((_, best)) => self.monitor.improves(metric, best),
            None => true,
        };
        if improved {
            self.best = Some((self.epochs, metric));
            self.bad_epochs = 0;
            return (true, StopDecision::Continue);
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            let best_epoch = self.best_epoch().unwrap_or(self.epochs);
            (false, StopDecision::Stop { best_epoch })
        } else {
            (false, StopDecision::Continue)
        }
    }
}

pub fn early_stop(history: &[f64], monitor: Monitor, patience: usize) -> StopDecision {
    let mut s = EarlyStopper::new(monitor, patience);
    for &m in history {
        if let (_, stop @ StopDecision::Stop { .. }) = s.observe(m) {
            return stop;
        }
    }
    StopDecision::Continue
}
