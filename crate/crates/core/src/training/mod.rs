//! RAdam optimization of the MAE objective, early stopping on validation
//! MAE, raw-scale metrics, and hyperparameter / embedding sweeps.

mod early_stop;
mod grid;
mod metrics;
mod radam;
mod reference;
mod trainer;

use thiserror::Error;

use crate::data::DataError;
use crate::error::TensorError;

pub use early_stop::{EarlyStopping, StopDecision, IMPROVEMENT_TOLERANCE};
pub use grid::{grid_search, run_ablation, sweep_csv, AblationRow, GridSpec, SweepRow};
pub use metrics::{evaluate_metrics, MetricsAccumulator, MetricsReport, DEFAULT_MAPE_THRESHOLD};
pub use radam::{OptimizerState, RAdam, RAdamConfig};
pub use reference::{
    reference_ablation, reference_result, reference_shape, ReferenceMetrics, REFERENCE_ABLATION, REFERENCE_DATASETS,
    REFERENCE_OPTIMUM, REFERENCE_RESULTS,
};
pub use trainer::{
    evaluate_split, for_each_prediction, predict_split, EpochRecord, History, StopReason, TrainConfig, TrainOutcome,
    Trainer,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl TrainError {
    /// Numeric blow-up (as opposed to a contract violation).
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient { .. }
                | TrainError::NonFinite(_)
                | TrainError::Tensor(TensorError::NonFinite { .. })
        )
    }
}
