use std::sync::Arc;

use super::{build_time_features, split_counts, DataError, NormStats, RawSeries, Result, SplitRatio};

/// One window: `x` is `N×T`, `y` is `N×K`, `tf` is `N×3T`, all row-major by sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Series step of the first input value.
    pub start: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub tf: Vec<f64>,
}

/// Number of stride-1 windows, `T_total − T − K + 1`, or 0 when the series is too short.
pub fn window_count(steps: usize, input_steps: usize, horizon: usize) -> usize {
    (steps + 1).saturating_sub(input_steps + horizon)
}

/// Chronological view of consecutive windows over a shared (normalized) series.
///
/// Samples are materialized on demand, so a split costs two integers.
#[derive(Debug, Clone)]
pub struct SampleSet {
    series: Arc<RawSeries>,
    stats: Option<NormStats>,
    input_steps: usize,
    horizon: usize,
    first: usize,
    len: usize,
}

/// Every stride-1 window of `series`: X from `[t, t+T)`, Y from `[t+T, t+T+K)`.
pub fn make_windows(
    series: Arc<RawSeries>,
    stats: Option<NormStats>,
    input_steps: usize,
    horizon: usize,
) -> Result<SampleSet> {
    if input_steps == 0 || horizon == 0 {
        return Err(DataError::Windowing("T and K must be at least 1".into()));
    }
    let len = window_count(series.steps(), input_steps, horizon);
    if len == 0 {
        return Err(DataError::Windowing(format!(
            "series of {} steps is shorter than T + K = {}",
            series.steps(),
            input_steps + horizon
        )));
    }
    Ok(SampleSet {
        series,
        stats,
        input_steps,
        horizon,
        first: 0,
        len,
    })
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sensors(&self) -> usize {
        self.series.sensors()
    }

    pub fn input_steps(&self) -> usize {
        self.input_steps
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stats(&self) -> Option<NormStats> {
        self.stats
    }

    pub fn series(&self) -> &RawSeries {
        &self.series
    }

    /// Series step at which sample `i` begins.
    pub fn start_step(&self, i: usize) -> usize {
        assert!(i < self.len, "sample {i} out of range ({} samples)", self.len);
        self.first + i
    }

    pub fn get(&self, i: usize) -> Sample {
        let t0 = self.start_step(i);
        let (n, t, k) = (self.sensors(), self.input_steps, self.horizon);
        let mut x = Vec::with_capacity(n * t);
        let mut y = Vec::with_capacity(n * k);
        for s in 0..n {
            x.extend((0..t).map(|j| self.series.value(t0 + j, s)));
        }
        for s in 0..n {
            y.extend((0..k).map(|j| self.series.value(t0 + t + j, s)));
        }
        let meta = self.series.meta();
        let row = build_time_features(meta.start_timestamp, meta.step_minutes, t0, t);
        let tf = row.iter().copied().cycle().take(n * 3 * t).collect();
        Sample { start: t0, x, y, tf }
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Contiguous sub-range `[from, from+len)` of this set.
    pub fn slice(&self, from: usize, len: usize) -> SampleSet {
        assert!(from + len <= self.len, "slice beyond sample set");
        SampleSet {
            first: self.first + from,
            len,
            ..self.clone()
        }
    }

    /// Chronological split by sample index; no shuffling across boundaries.
    pub fn split(&self, ratio: SplitRatio) -> Result<(SampleSet, SampleSet, SampleSet)> {
        let (tr, va, te) = split_counts(self.len, ratio)?;
        Ok((self.slice(0, tr), self.slice(tr, va), self.slice(tr + va, te)))
    }
}

/// Normalized windows split three ways, with statistics fitted on the training steps only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stats: NormStats,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

impl PreparedData {
    pub fn new(raw: &RawSeries, input_steps: usize, horizon: usize, ratio: SplitRatio) -> Result<Self> {
        let total = window_count(raw.steps(), input_steps, horizon);
        if total == 0 {
            return Err(DataError::Windowing(format!(
                "series of {} steps is shorter than T + K = {}",
                raw.steps(),
                input_steps + horizon
            )));
        }
        let (n_train, _, _) = split_counts(total, ratio)?;
        // steps touched by training windows, inputs and targets alike
        let train_steps = n_train - 1 + input_steps + horizon;
        let stats = NormStats::fit(&raw.values()[..train_steps * raw.sensors()])?;
        Self::with_stats(raw, input_steps, horizon, ratio, stats)
    }

    /// Same pipeline with externally supplied statistics (e.g. from a checkpoint).
    pub fn with_stats(
        raw: &RawSeries,
        input_steps: usize,
        horizon: usize,
        ratio: SplitRatio,
        stats: NormStats,
    ) -> Result<Self> {
        let normalized = Arc::new(raw.map_values(|v| stats.apply(v))?);
        let all = make_windows(normalized, Some(stats), input_steps, horizon)?;
        let (train, val, test) = all.split(ratio)?;
        Ok(PreparedData {
            stats,
            train,
            val,
            test,
        })
    }

    pub fn split_named(&self, name: &str) -> Option<&SampleSet> {
        match name {
            "train" => Some(&self.train),
            "val" | "validation" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::test_meta;

    fn ramp(steps: usize, sensors: usize) -> Arc<RawSeries> {
        let v = (0..steps * sensors).map(|i| (i / sensors) as f64).collect();
        Arc::new(RawSeries::new(v, steps, sensors, test_meta()).unwrap())
    }

    #[test]
    fn counts() {
        assert_eq!(window_count(16992, 12, 12), 16969);
        assert_eq!(make_windows(ramp(24, 1), None, 12, 12).unwrap().len(), 1);
        assert!(make_windows(ramp(23, 1), None, 12, 12).is_err());
    }

    #[test]
    fn ramp_first_sample() {
        let set = make_windows(ramp(24, 1), None, 12, 12).unwrap();
        let s = set.get(0);
        assert_eq!(s.x, (0..12).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(s.y, (12..24).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn tf_rows_identical_and_bounded() {
        let set = make_windows(ramp(400, 3), None, 4, 2).unwrap();
        for i in [0, 100, 394] {
            let s = set.get(i);
            let rows: Vec<_> = s.tf.chunks(12).collect();
            assert!(rows.windows(2).all(|w| w[0] == w[1]));
            assert!(s.tf.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn no_look_ahead() {
        let set = make_windows(ramp(60, 2), None, 5, 3).unwrap();
        for s in set.iter() {
            // ramp value equals its step index
            let max_x = s.x.iter().cloned().fold(f64::MIN, f64::max);
            let min_y = s.y.iter().cloned().fold(f64::MAX, f64::min);
            assert!(min_y > max_x);
        }
    }

    #[test]
    fn stats_come_from_training_steps() {
        // drifting series: full-series stats differ from training-portion stats
        let steps = 100;
        let v: Vec<f64> = (0..steps).map(|t| t as f64 * t as f64).collect();
        let raw = RawSeries::new(v.clone(), steps, 1, test_meta()).unwrap();
        let prep = PreparedData::new(&raw, 4, 2, SplitRatio::SIX_TWO_TWO).unwrap();
        let total = window_count(steps, 4, 2);
        let n_train = split_counts(total, SplitRatio::SIX_TWO_TWO).unwrap().0;
        let train_only = NormStats::fit(&v[..n_train - 1 + 6]).unwrap();
        assert_eq!(prep.stats, train_only);
        assert_ne!(prep.stats, NormStats::fit(&v).unwrap());
        assert_eq!(prep.train.len() + prep.val.len() + prep.test.len(), total);
        assert_eq!(prep.val.start_step(0), n_train);
    }
}
