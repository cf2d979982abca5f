//! MAE, RMSE and masked MAPE on the original (de-normalized) scale.

use serde::{Deserialize, Serialize};

/// Targets with `|y|` below this are left out of MAPE.
pub const DEFAULT_MAPE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// Percent; `None` when every target was masked.
    pub mape: Option<f64>,
    pub mape_threshold: f64,
    /// Values excluded from MAPE.
    pub masked: usize,
    pub count: usize,
}

impl MetricsReport {
    pub fn mape_display(&self) -> String {
        match self.mape {
            Some(v) => format!("{v:.4}"),
            None => "undefined".into(),
        }
    }
}

/// Running sums so metrics can be accumulated batch by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsAccumulator {
    threshold: f64,
    abs_sum: f64,
    sq_sum: f64,
    ape_sum: f64,
    count: usize,
    ape_count: usize,
}

impl MetricsAccumulator {
    pub fn new(mape_threshold: f64) -> Self {
        MetricsAccumulator {
            threshold: mape_threshold,
            abs_sum: 0.0,
            sq_sum: 0.0,
            ape_sum: 0.0,
            count: 0,
            ape_count: 0,
        }
    }

    pub fn push(&mut self, yhat: f64, y: f64) {
        let e = yhat - y;
        self.abs_sum += e.abs();
        self.sq_sum += e * e;
        if y.abs() >= self.threshold {
            self.ape_sum += (e / y).abs();
            self.ape_count += 1;
        }
        self.count += 1;
    }

    pub fn extend(&mut self, yhat: &[f64], y: &[f64]) {
        assert_eq!(yhat.len(), y.len(), "prediction / target length mismatch");
        for (&a, &b) in yhat.iter().zip(y) {
            self.push(a, b);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Panics when nothing was pushed.
    pub fn finish(&self) -> MetricsReport {
        assert!(self.count > 0, "metrics over an empty set");
        let n = self.count as f64;
        let mae = self.abs_sum / n;
        let rmse = (self.sq_sum / n).sqrt();
        // equal only up to rounding when every |e| is the same
        assert!(
            mae <= rmse * (1.0 + 1e-12) + f64::MIN_POSITIVE,
            "MAE {mae} exceeds RMSE {rmse}"
        );
        MetricsReport {
            mae,
            rmse,
            mape: (self.ape_count > 0).then(|| 100.0 * self.ape_sum / self.ape_count as f64),
            mape_threshold: self.threshold,
            masked: self.count - self.ape_count,
            count: self.count,
        }
    }
}

/// Metrics over flat, equally long prediction and target arrays.
pub fn evaluate_metrics(yhat: &[f64], y: &[f64], mape_threshold: f64) -> MetricsReport {
    let mut acc = MetricsAccumulator::new(mape_threshold);
    acc.extend(yhat, y);
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed() {
        let r = evaluate_metrics(&[1.0, 2.0, 5.0], &[2.0, 2.0, 1.0], 1e-3);
        assert_eq!(r.mae, 5.0 / 3.0);
        assert_eq!(r.rmse, (17.0f64 / 3.0).sqrt());
        let mape = r.mape.unwrap();
        assert!((mape - 100.0 * (0.5 + 0.0 + 4.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let y = [3.0, -1.0, 0.0];
        let r = evaluate_metrics(&y, &y, 1e-3);
        assert_eq!((r.mae, r.rmse, r.mape), (0.0, 0.0, Some(0.0)));
        assert_eq!(r.masked, 1);
    }

    #[test]
    fn mape_undefined_when_all_masked() {
        let r = evaluate_metrics(&[1.0, 2.0], &[0.0, 1e-4], 1e-3);
        assert_eq!(r.mape, None);
        assert_eq!(r.masked, 2);
        assert_eq!(r.mape_display(), "undefined");
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["mape"].is_null());
    }
}
