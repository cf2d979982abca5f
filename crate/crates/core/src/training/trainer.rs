use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::early_stop::{EarlyStopping, StopDecision};
use super::metrics::{MetricsAccumulator, MetricsReport, DEFAULT_MAPE_THRESHOLD};
use super::radam::{RAdam, RAdamConfig};
use super::TrainError;
use crate::data::{iterate_batches, Batch, SampleSet};
use crate::model::Fptn;
use crate::scalar::Scalar;
use crate::tape::{NormMode, Tape};

fn default_true() -> bool {
    true
}

fn default_mape_threshold() -> f64 {
    DEFAULT_MAPE_THRESHOLD
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clip_grad_norm: Option<f64>,
    #[serde(default = "default_mape_threshold")]
    pub mape_threshold: f64,
    /// Reshuffle training windows every epoch.
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 64,
            lr: 1e-3,
            patience: 40,
            seed: 0,
            clip_grad_norm: None,
            mape_threshold: DEFAULT_MAPE_THRESHOLD,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(TrainError::Config(
                "epochs, batch_size and patience must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    fn optimizer(&self) -> RAdamConfig {
        RAdamConfig {
            lr: self.lr,
            clip_grad_norm: self.clip_grad_norm,
            ..RAdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean normalized-scale MAE over the epoch's training windows.
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_mae,val_rmse,val_mape,seconds";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Epoch with the lowest validation MAE (earliest on ties).
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_mae <= r.val_mae => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let mape = r.val_mape.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.epoch, r.train_loss, r.val_mae, r.val_rmse, mape, r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    EarlyStop { epoch: usize },
    Diverged { epoch: usize, reason: String },
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::EpochLimit => f.write_str("epoch limit reached"),
            StopReason::EarlyStop { epoch } => write!(f, "early stop after epoch {epoch}"),
            StopReason::Diverged { epoch, reason } => write!(f, "diverged in epoch {epoch}: {reason}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    /// Parameters from the epoch with the lowest validation MAE, or the
    /// initial model if no epoch finished.
    pub model: Fptn<S>,
    pub best_epoch: Option<usize>,
    pub best_val: Option<MetricsReport>,
    pub history: History,
    pub stop: StopReason,
    pub skipped_batches: usize,
}

/// Stateful RAdam loop over one model.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    config: TrainConfig,
    model: Fptn<S>,
    optimizer: RAdam<S>,
    names: Vec<String>,
    epoch: usize,
    skipped_batches: usize,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: Fptn<S>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let named = model.params().named();
        let names = named.iter().map(|(n, _)| n.clone()).collect();
        let optimizer = RAdam::new(config.optimizer(), named.iter().map(|(_, t)| *t));
        Ok(Trainer {
            config,
            model,
            optimizer,
            names,
            epoch: 0,
            skipped_batches: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Fptn<S> {
        &self.model
    }

    pub fn into_model(self) -> Fptn<S> {
        self.model
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    /// One optimizer update on a batch; returns the batch loss, or `None`
    /// when the batch holds fewer than two normalization rows.
    pub fn step_batch(&mut self, batch: &Batch) -> Result<Option<f64>, TrainError> {
        if batch.size() * batch.sensors < 2 {
            self.skipped_batches += 1;
            return Ok(None);
        }
        let x = batch.x_tensor::<S>();
        let y = batch.y_tensor::<S>();
        let tf = self.model.config().time_embedding.then(|| batch.tf_tensor::<S>());
        let (loss, grads) = self.model.loss_and_grads(&x, tf.as_ref(), &y, NormMode::Train)?;
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(TrainError::NonFinite(format!("training loss {loss}")));
        }
        let mut params = self.model.params_mut().tensors_mut();
        self.optimizer.step(&mut params, &grads, &self.names)?;
        Ok(Some(loss))
    }

    /// One pass over `train`; returns the sample-weighted mean batch loss.
    pub fn train_epoch(&mut self, train: &SampleSet) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::Config("training split is empty".into()));
        }
        let seed = self
            .config
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(self.epoch as u64);
        let (mut total, mut weight) = (0.0, 0usize);
        for batch in iterate_batches(train, self.config.batch_size, self.config.shuffle, seed)? {
            if let Some(loss) = self.step_batch(&batch)? {
                total += loss * batch.size() as f64;
                weight += batch.size();
            }
        }
        self.epoch += 1;
        if weight == 0 {
            return Err(TrainError::Config(
                "every training batch has fewer than two normalization rows".into(),
            ));
        }
        Ok(total / weight as f64)
    }

    /// Train with validation MAE on `val` driving model selection and early stopping.
    pub fn fit(self, train: &SampleSet, val: &SampleSet) -> Result<TrainOutcome<S>, TrainError> {
        let (batch, threshold) = (self.config.batch_size, self.config.mape_threshold);
        self.fit_with(train, |_, model| evaluate_split(model, val, batch, threshold))
    }

    /// Like [`Trainer::fit`] with a caller-provided validation metric.
    pub fn fit_with<F>(mut self, train: &SampleSet, mut validate: F) -> Result<TrainOutcome<S>, TrainError>
    where
        F: FnMut(usize, &Fptn<S>) -> Result<MetricsReport, TrainError>,
    {
        let mut history = History::default();
        let mut stopper = EarlyStopping::new(self.config.patience);
        let mut best: Option<(usize, MetricsReport, Fptn<S>)> = None;
        let initial = self.model.clone();
        let mut stop = StopReason::EpochLimit;

        for epoch in 0..self.config.epochs {
            let clock = Instant::now();
            let outcome = self
                .train_epoch(train)
                .and_then(|loss| validate(epoch, &self.model).map(|m| (loss, m)));
            let (train_loss, report) = match outcome {
                Ok(v) => v,
                Err(e) if e.is_divergence() => {
                    stop = StopReason::Diverged { epoch, reason: e.to_string() };
                    break;
                }
                Err(e) => return Err(e),
            };
            if !report.mae.is_finite() {
                stop = StopReason::Diverged {
                    epoch,
                    reason: format!("validation MAE {}", report.mae),
                };
                break;
            }
            history.records.push(EpochRecord {
                epoch,
                train_loss,
                val_mae: report.mae,
                val_rmse: report.rmse,
                val_mape: report.mape,
                seconds: clock.elapsed().as_secs_f64(),
            });
            if best.as_ref().map_or(true, |(_, b, _)| report.mae < b.mae) {
                best = Some((epoch, report.clone(), self.model.clone()));
            }
            if stopper.update(report.mae) == StopDecision::Stop {
                stop = StopReason::EarlyStop { epoch };
                break;
            }
        }

        let skipped_batches = self.skipped_batches;
        Ok(match best {
            Some((epoch, report, model)) => TrainOutcome {
                model,
                best_epoch: Some(epoch),
                best_val: Some(report),
                history,
                stop,
                skipped_batches,
            },
            None => TrainOutcome {
                model: initial,
                best_epoch: None,
                best_val: None,
                history,
                stop,
                skipped_batches,
            },
        })
    }
}

/// Eval-mode forecasts over `set`, handed to `sink` per batch as raw-scale
/// `(batch, predictions, targets)`, each `[B×N×K]` flattened.
pub fn for_each_prediction<S, F>(
    model: &Fptn<S>,
    set: &SampleSet,
    batch_size: usize,
    mut sink: F,
) -> Result<(), TrainError>
where
    S: Scalar,
    F: FnMut(&Batch, &[f64], &[f64]),
{
    let c = model.config();
    if set.sensors() != c.n_sensors || set.input_steps() != c.input_steps || set.horizon() != c.horizon {
        return Err(TrainError::Config(format!(
            "dataset windows have N={}, T={}, K={} but the model expects N={}, T={}, K={}",
            set.sensors(),
            set.input_steps(),
            set.horizon(),
            c.n_sensors,
            c.input_steps,
            c.horizon
        )));
    }
    let mut scratch = model.clone();
    let invert = |z: f64| set.stats().map_or(z, |s| s.invert(z));
    for batch in iterate_batches(set, batch_size, false, 0)? {
        let x = batch.x_tensor::<S>();
        let tf = c.time_embedding.then(|| batch.tf_tensor::<S>());
        let mut tape = Tape::new();
        let pass = scratch.forward(&mut tape, &x, tf.as_ref(), NormMode::Eval)?;
        let yhat: Vec<f64> = tape.value(pass.yhat).data().iter().map(|v| invert(v.to_f64_lossy())).collect();
        let y: Vec<f64> = batch.y.iter().map(|&v| invert(v)).collect();
        sink(&batch, &yhat, &y);
    }
    Ok(())
}

/// Raw-scale `(predictions, targets)` over the whole set, `[len×N×K]` flattened.
pub fn predict_split<S: Scalar>(
    model: &Fptn<S>,
    set: &SampleSet,
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for_each_prediction(model, set, batch_size, |_, yhat, y| {
        p.extend_from_slice(yhat);
        t.extend_from_slice(y);
    })?;
    Ok((p, t))
}

/// Raw-scale metrics of `model` on `set`; the same path serves validation and test.
pub fn evaluate_split<S: Scalar>(
    model: &Fptn<S>,
    set: &SampleSet,
    batch_size: usize,
    mape_threshold: f64,
) -> Result<MetricsReport, TrainError> {
    if set.is_empty() {
        return Err(TrainError::Config("cannot evaluate an empty split".into()));
    }
    let mut acc = MetricsAccumulator::new(mape_threshold);
    for_each_prediction(model, set, batch_size, |_, yhat, y| acc.extend(yhat, y))?;
    Ok(acc.finish())
}
