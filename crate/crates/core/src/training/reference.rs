//! Published figures used only as annotations next to locally produced numbers.

use crate::model::PositionalMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

const fn rm(mae: f64, rmse: f64, mape: f64) -> ReferenceMetrics {
    ReferenceMetrics { mae, rmse, mape }
}

/// `(name, sensors, steps)` of the four benchmark datasets.
pub const REFERENCE_DATASETS: [(&str, usize, usize); 4] = [
    ("PeMSD3", 358, 26208),
    ("PeMSD4", 307, 16992),
    ("PeMSD7", 883, 28224),
    ("PeMSD8", 170, 17856),
];

/// Test-set results of the full model, 12-step in / 12-step out.
pub const REFERENCE_RESULTS: [(&str, ReferenceMetrics); 4] = [
    ("PeMSD3", rm(14.62, 24.81, 14.61)),
    ("PeMSD4", rm(18.49, 30.29, 13.10)),
    ("PeMSD7", rm(19.94, 32.49, 8.77)),
    ("PeMSD8", rm(13.98, 23.30, 10.06)),
];

/// Embedding ablation on PeMSD4, keyed by `(time embedding, positional mode)`.
pub const REFERENCE_ABLATION: [(bool, PositionalMode, ReferenceMetrics); 6] = [
    (false, PositionalMode::None, rm(22.59, 35.48, 16.92)),
    (true, PositionalMode::None, rm(21.65, 34.80, 15.21)),
    (false, PositionalMode::Fixed, rm(22.14, 34.54, 18.48)),
    (false, PositionalMode::Learnable, rm(19.38, 30.97, 15.95)),
    (true, PositionalMode::Fixed, rm(18.55, 30.32, 14.16)),
    (true, PositionalMode::Learnable, rm(18.49, 30.29, 13.10)),
];

/// Best `(d_model, layers, heads)` of the published hyperparameter study.
pub const REFERENCE_OPTIMUM: (usize, usize, usize) = (256, 4, 8);

/// Lookup by dataset name, ignoring case and a `pems`/`pemsd` prefix spelling.
pub fn reference_result(name: &str) -> Option<ReferenceMetrics> {
    let key = normalize(name);
    REFERENCE_RESULTS
        .iter()
        .find(|(n, _)| normalize(n) == key)
        .map(|(_, m)| *m)
}

/// `(sensors, steps)` for a dataset name.
pub fn reference_shape(name: &str) -> Option<(usize, usize)> {
    let key = normalize(name);
    REFERENCE_DATASETS
        .iter()
        .find(|(n, _, _)| normalize(n) == key)
        .map(|&(_, n, t)| (n, t))
}

pub fn reference_ablation(time_embedding: bool, positional: PositionalMode) -> ReferenceMetrics {
    REFERENCE_ABLATION
        .iter()
        .find(|(te, pe, _)| *te == time_embedding && *pe == positional)
        .map(|&(_, _, m)| m)
        .expect("all six combinations are listed")
}

fn normalize(name: &str) -> String {
    let lower = name.to_ascii_lowercase().replace(['-', '_'], "");
    let digits = lower.trim_start_matches("pemsd").trim_start_matches("pems");
    digits.trim_start_matches('0').to_string()
}
