//! Seeded multi-sensor daily-cycle series and naive forecasting baselines.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, RawSeries, SampleSet, SeriesMeta};
use crate::training::{MetricsAccumulator, MetricsReport};

/// Steps in one day at 5-minute resolution.
pub const STEPS_PER_DAY: usize = 288;

/// One Gaussian bump on the daily cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Time-of-day slot of the bump centre, in steps `[0, 288)`.
    pub phase: f64,
    /// Standard deviation in steps.
    pub width: f64,
    #[serde(default = "one")]
    pub height: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub amplitude: f64,
    pub peaks: Vec<Peak>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub sensors: Vec<SensorProfile>,
    pub steps: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Multiplier applied on Saturdays and Sundays; 1 keeps every day alike.
    #[serde(default = "one")]
    pub weekend_scale: f64,
    /// Defaults to Monday 2018-01-01 00:00.
    #[serde(default = "default_start")]
    pub start: NaiveDateTime,
}

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

impl SyntheticSpec {
    /// Alternating morning/evening sensors; every third sensor has a second
    /// peak and the evening group is shifted by half a day.
    pub fn two_phase(sensors: usize, steps: usize, noise_std: f64, seed: u64) -> Self {
        let profiles = (0..sensors)
            .map(|n| {
                let phase = if n % 2 == 0 { 96.0 } else { 240.0 };
                let mut peaks = vec![Peak { phase, width: 18.0, height: 1.0 }];
                if n % 3 == 2 {
                    peaks.push(Peak {
                        phase: (phase + 144.0) % STEPS_PER_DAY as f64,
                        width: 12.0,
                        height: 0.6,
                    });
                }
                SensorProfile {
                    amplitude: 100.0 + 20.0 * (n % 4) as f64,
                    peaks,
                }
            })
            .collect();
        SyntheticSpec {
            sensors: profiles,
            steps,
            noise_std,
            seed,
            weekend_scale: 1.0,
            start: default_start(),
        }
    }

    /// Random one- or two-peak profiles drawn from `seed`, with damped weekends.
    pub fn diverse(sensors: usize, steps: usize, noise_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5e45);
        let profiles = (0..sensors)
            .map(|_| {
                let count = rng.gen_range(1..=2);
                let peaks = (0..count)
                    .map(|_| Peak {
                        phase: rng.gen_range(0.0..STEPS_PER_DAY as f64),
                        width: rng.gen_range(10.0..30.0),
                        height: rng.gen_range(0.5..1.0),
                    })
                    .collect();
                SensorProfile {
                    amplitude: rng.gen_range(50.0..150.0),
                    peaks,
                }
            })
            .collect();
        SyntheticSpec {
            sensors: profiles,
            steps,
            noise_std,
            seed,
            weekend_scale: 0.5,
            start: default_start(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.sensors.is_empty() {
            return Err(DataError::Config("synthetic spec needs at least one sensor".into()));
        }
        if self.steps < 48 {
            return Err(DataError::Config(format!(
                "synthetic series needs at least 48 steps, got {}",
                self.steps
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::Config(format!("noise std {} must be >= 0", self.noise_std)));
        }
        for (n, p) in self.sensors.iter().enumerate() {
            if p.peaks.iter().any(|k| !(k.width > 0.0)) {
                return Err(DataError::Config(format!("sensor {n} has a non-positive peak width")));
            }
        }
        Ok(())
    }

    /// Noiseless value of sensor `n` at step `t`.
    pub fn clean_value(&self, n: usize, t: usize) -> f64 {
        let when = self.start + chrono::Duration::minutes(5 * t as i64);
        let slot = ((when.hour() * 60 + when.minute()) / 5) as f64;
        let day = STEPS_PER_DAY as f64;
        let profile = &self.sensors[n];
        let sum: f64 = profile
            .peaks
            .iter()
            .map(|p| {
                let raw = (slot - p.phase).rem_euclid(day);
                let dist = raw.min(day - raw);
                p.height * (-dist * dist / (2.0 * p.width * p.width)).exp()
            })
            .sum();
        let weekend = matches!(when.weekday(), Weekday::Sat | Weekday::Sun);
        let scale = if weekend { self.weekend_scale } else { 1.0 };
        profile.amplitude * scale * sum.max(0.0)
    }
}

/// Materialize the series; noise is added per value and the result clipped at 0.
pub fn generate(spec: &SyntheticSpec) -> Result<RawSeries, DataError> {
    spec.validate()?;
    let n = spec.sensors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| DataError::Config(e.to_string()))?;
    let mut values = Vec::with_capacity(spec.steps * n);
    for t in 0..spec.steps {
        for s in 0..n {
            let mut v = spec.clean_value(s, t);
            if spec.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            values.push(v.max(0.0));
        }
    }
    let meta = SeriesMeta {
        start_timestamp: spec.start,
        step_minutes: 5,
        name: "synthetic".into(),
    };
    RawSeries::new(values, spec.steps, n, meta)
}

/// Repeat the last input column: `x` is `N×T` row-major, the result `N×K`.
pub fn baseline_last_value(x: &[f64], sensors: usize, input_steps: usize, horizon: usize) -> Vec<f64> {
    assert!(input_steps >= 1 && x.len() == sensors * input_steps, "x must be N×T with T ≥ 1");
    (0..sensors)
        .flat_map(|n| std::iter::repeat_n(x[n * input_steps + input_steps - 1], horizon))
        .collect()
}

/// Last-value baseline scored on the raw scale over every window of `set`.
pub fn last_value_metrics(set: &SampleSet, mape_threshold: f64) -> MetricsReport {
    let invert = |z: f64| set.stats().map_or(z, |s| s.invert(z));
    let (n, t, k) = (set.sensors(), set.input_steps(), set.horizon());
    let mut acc = MetricsAccumulator::new(mape_threshold);
    for sample in set.iter() {
        let pred = baseline_last_value(&sample.x, n, t, k);
        for (p, y) in pred.iter().zip(&sample.y) {
            acc.push(invert(*p), invert(*y));
        }
    }
    acc.finish()
}

/// Time-of-day slot of step `t`.
fn slot_of(series: &RawSeries, t: usize, per_day: usize) -> usize {
    let meta = series.meta();
    let minutes = meta.start_timestamp.hour() as usize * 60 + meta.start_timestamp.minute() as usize;
    (minutes / meta.step_minutes as usize + t) % per_day
}

/// Per-slot mean over steps `[0, history)`, looked up for each `targets` step.
/// Returns `targets.len() × N` row-major.
pub fn baseline_historical_average(
    series: &RawSeries,
    history: usize,
    targets: &[usize],
) -> Result<Vec<f64>, DataError> {
    let step = series.meta().step_minutes as usize;
    if 1440 % step != 0 {
        return Err(DataError::Config(format!("step of {step} minutes does not divide a day")));
    }
    let per_day = 1440 / step;
    let history = history.min(series.steps());
    if history < per_day {
        return Err(DataError::Series(format!(
            "historical average needs a full day ({per_day} steps) of history, got {history}"
        )));
    }
    let n = series.sensors();
    let mut sums = vec![0.0; per_day * n];
    let mut counts = vec![0usize; per_day];
    for t in 0..history {
        let slot = slot_of(series, t, per_day);
        counts[slot] += 1;
        for (s, v) in series.row(t).iter().enumerate() {
            sums[slot * n + s] += v;
        }
    }
    Ok(targets
        .iter()
        .flat_map(|&t| {
            let slot = slot_of(series, t, per_day);
            let c = counts[slot] as f64;
            (0..n).map(move |s| (slot, s, c))
        })
        .map(|(slot, s, c)| sums[slot * n + s] / c)
        .collect())
}
