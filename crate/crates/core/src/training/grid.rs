use serde::{Deserialize, Serialize};

use super::reference::{reference_ablation, ReferenceMetrics, REFERENCE_OPTIMUM};
use super::trainer::{evaluate_split, TrainConfig, Trainer};
use super::metrics::MetricsReport;
use super::TrainError;
use crate::data::PreparedData;
use crate::model::{Fptn, ModelConfig, PositionalMode};
use crate::scalar::Scalar;

/// Cartesian grid over width, depth, heads and learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d_model: Vec<usize>,
    pub layers: Vec<usize>,
    pub heads: Vec<usize>,
    pub lr: Vec<f64>,
}

impl GridSpec {
    /// The full published search space.
    pub fn full() -> Self {
        GridSpec {
            d_model: vec![64, 128, 256, 512, 1024],
            layers: vec![2, 3, 4, 5, 6],
            heads: vec![4, 8, 16, 32],
            lr: vec![5e-3, 1e-3, 5e-4, 1e-4],
        }
    }

    /// `(d_model, layers, heads, lr)` in nested order.
    pub fn combinations(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for &d in &self.d_model {
            for &l in &self.layers {
                for &h in &self.heads {
                    for &lr in &self.lr {
                        out.push((d, l, h, lr));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// 1 is the lowest validation MAE.
    pub rank: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub lr: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: Option<f64>,
    pub epochs_run: usize,
    pub parameters: usize,
    /// Marks the published optimum `(256, 4, 8)`.
    pub reference_optimum: bool,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "rank,d_model,layers,heads,lr,val_mae,val_rmse,val_mape,epochs_run,parameters,reference_optimum";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.rank,
            self.d_model,
            self.layers,
            self.heads,
            self.lr,
            self.val_mae,
            self.val_rmse,
            self.val_mape.map(|v| v.to_string()).unwrap_or_default(),
            self.epochs_run,
            self.parameters,
            self.reference_optimum
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SweepRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Train every grid point from `base` under `train`'s budget; rows come back
/// sorted by best validation MAE.
pub fn grid_search<S: Scalar>(
    base: &ModelConfig,
    grid: &GridSpec,
    data: &PreparedData,
    train: &TrainConfig,
) -> Result<Vec<SweepRow>, TrainError> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(TrainError::Config("hyperparameter grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(combos.len());
    for (d, l, h, lr) in combos {
        let config = ModelConfig {
            d_model: d,
            layers: l,
            heads: h,
            ..base.clone()
        };
        config.validate()?;
        let model = Fptn::<S>::new(config.clone())?;
        let tc = TrainConfig { lr, ..train.clone() };
        let out = Trainer::new(model, tc)?.fit(&data.train, &data.val)?;
        let best = out.best_val.unwrap_or(MetricsReport {
            mae: f64::INFINITY,
            rmse: f64::INFINITY,
            mape: None,
            mape_threshold: train.mape_threshold,
            masked: 0,
            count: 0,
        });
        rows.push(SweepRow {
            rank: 0,
            d_model: d,
            layers: l,
            heads: h,
            lr,
            val_mae: best.mae,
            val_rmse: best.rmse,
            val_mape: best.mape,
            epochs_run: out.history.len(),
            parameters: config.parameter_count(),
            reference_optimum: (d, l, h) == REFERENCE_OPTIMUM,
        });
    }
    rows.sort_by(|a, b| a.val_mae.total_cmp(&b.val_mae));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub time_embedding: bool,
    pub positional: PositionalMode,
    pub seed: u64,
    pub val_mae: f64,
    pub test: MetricsReport,
    pub reference: ReferenceMetrics,
}

/// The six embedding variants, each trained once per seed and scored on the test split.
pub fn run_ablation<S: Scalar>(
    base: &ModelConfig,
    data: &PreparedData,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>, TrainError> {
    let variants = [
        (false, PositionalMode::None),
        (true, PositionalMode::None),
        (false, PositionalMode::Fixed),
        (false, PositionalMode::Learnable),
        (true, PositionalMode::Fixed),
        (true, PositionalMode::Learnable),
    ];
    let mut rows = Vec::new();
    for (te, pe) in variants {
        for &seed in seeds {
            let config = base.clone().with_embeddings(te, pe).with_seed(seed);
            let model = Fptn::<S>::new(config)?;
            let tc = TrainConfig { seed, ..train.clone() };
            let out = Trainer::new(model, tc)?.fit(&data.train, &data.val)?;
            let test = evaluate_split(&out.model, &data.test, train.batch_size, train.mape_threshold)?;
            rows.push(AblationRow {
                time_embedding: te,
                positional: pe,
                seed,
                val_mae: out.best_val.map_or(f64::INFINITY, |m| m.mae),
                test,
                reference: reference_ablation(te, pe),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_size_and_validity() {
        let g = GridSpec::full();
        let combos = g.combinations();
        assert_eq!(combos.len(), 5 * 5 * 4 * 4);
        for (d, l, h, _) in combos {
            assert!(ModelConfig::new(307, 12, 12, d, h, l).validate().is_ok());
        }
    }

    #[test]
    fn csv_marks_reference() {
        let row = SweepRow {
            rank: 1,
            d_model: 256,
            layers: 4,
            heads: 8,
            lr: 1e-4,
            val_mae: 1.5,
            val_rmse: 2.0,
            val_mape: None,
            epochs_run: 3,
            parameters: 10,
            reference_optimum: true,
        };
        let csv = sweep_csv(&[row]);
        assert!(csv.lines().nth(1).unwrap().ends_with(",true"));
    }
}
