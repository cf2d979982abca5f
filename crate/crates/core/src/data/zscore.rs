use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Z-score statistics fitted on training values only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    /// Population standard deviation; always positive.
    pub std: f64,
}

impl NormStats {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(DataError::Normalization("no training values to fit".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        // summation noise on a constant series is a few ulps of the mean
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(DataError::Normalization(format!(
                "training values have zero spread (mean {mean}, std {std})"
            )));
        }
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
