use super::history::{EpochRecord, History};
use crate::error::{Error, Result};

/// Tracks the best validation loss and decides when to stop.
///
/// Only a strictly smaller loss counts as an improvement. Training stops
/// once `patience` consecutive epochs have passed without one.
#[derive(Debug, Clone)]
pub struct EarlyStopState<S> {
    patience: usize,
    best_val_loss: f64,
    best_epoch: usize,
    epochs_since_improvement: usize,
    snapshot: Option<S>,
}

impl<S> EarlyStopState<S> {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            snapshot: None,
        })
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn best_val_loss(&self) -> f64 {
        self.best_val_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub fn best_snapshot(&self) -> Option<&S> {
        self.snapshot.as_ref()
    }

    /// Records one epoch; `snapshot` is only invoked on improvement.
    /// Returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, snapshot: impl FnOnce() -> S) -> bool {
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            self.snapshot = Some(snapshot());
        } else {
            self.epochs_since_improvement += 1;
        }
        self.epochs_since_improvement >= self.patience
    }
}

/// A model being trained epoch by epoch.
pub trait Trainee {
    type Snapshot;

    /// Trains one epoch (1-based index) and reports its metrics.
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub history: History,
    /// Epoch after which early stopping fired, if it did.
    pub stopped_at: Option<usize>,
    /// Epoch whose weights the model holds on return.
    pub restored_epoch: Option<usize>,
}

/// Runs up to `max_epochs`. With a patience, the best-validation weights
/// are restored at the end whether or not the stop rule fired.
pub fn fit<M: Trainee>(model: &mut M, max_epochs: usize, patience: Option<usize>) -> Result<FitSummary> {
    let mut early = patience.map(EarlyStopState::new).transpose()?;
    let mut history = History::default();
    let mut stopped_at = None;
    for epoch in 1..=max_epochs {
        let record = model.run_epoch(epoch)?;
        history.push(record)?;
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy
        );
        if let Some(state) = early.as_mut() {
            if state.observe(epoch, record.val_loss, || model.snapshot()) {
                stopped_at = Some(epoch);
                break;
            }
        }
    }
    let mut restored_epoch = None;
    if let Some(state) = early {
        if let Some(best) = state.best_snapshot() {
            model.restore(best)?;
            restored_epoch = Some(state.best_epoch());
            if stopped_at.is_some() {
                log::info!(
                    "early stop after epoch {}; restored epoch {} (val loss {:.4})",
                    history.len(),
                    state.best_epoch(),
                    state.best_val_loss()
                );
            }
        }
    }
    Ok(FitSummary {
        history,
        stopped_at,
        restored_epoch,
    })
}
