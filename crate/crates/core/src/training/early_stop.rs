/// A validation MAE has to drop by more than this to count as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience counter over per-epoch validation MAE.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_since_best: usize,
    epochs_seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: None,
            epochs_since_best: 0,
            epochs_seen: 0,
        }
    }

    /// Record one epoch's validation MAE. Non-finite values never improve.
    pub fn update(&mut self, val_mae: f64) -> StopDecision {
        let epoch = self.epochs_seen;
        self.epochs_seen += 1;
        let improved = val_mae.is_finite()
            && match self.best {
                None => true,
                Some(b) => b - val_mae > IMPROVEMENT_TOLERANCE,
            };
        if improved {
            self.best = Some(val_mae);
            self.best_epoch = Some(epoch);
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        if self.epochs_since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
