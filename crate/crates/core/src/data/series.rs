use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Sidecar / embedded metadata of a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesMeta {
    #[serde(with = "iso8601")]
    pub start_timestamp: NaiveDateTime,
    pub step_minutes: u32,
    #[serde(default)]
    pub name: String,
}

mod iso8601 {
    use chrono::{DateTime, NaiveDateTime};
    use serde::{de, Deserialize, Deserializer, Serializer};

    const FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| de::Error::custom(format!("not an ISO-8601 timestamp: {raw:?}")))
    }

    pub fn parse(raw: &str) -> Option<NaiveDateTime> {
        if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
            return Some(t.naive_local());
        }
        ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
            .or_else(|| {
                chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })
    }
}

/// Observed traffic values, `steps × sensors` (one feature channel), row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    values: Vec<f64>,
    steps: usize,
    sensors: usize,
    meta: SeriesMeta,
}

impl RawSeries {
    pub fn new(values: Vec<f64>, steps: usize, sensors: usize, meta: SeriesMeta) -> Result<Self> {
        if steps == 0 || sensors == 0 {
            return Err(DataError::Series(format!(
                "need at least one step and one sensor, got {steps}×{sensors}"
            )));
        }
        if values.len() != steps * sensors {
            return Err(DataError::Series(format!(
                "{steps}×{sensors} series needs {} values, got {}",
                steps * sensors,
                values.len()
            )));
        }
        if meta.step_minutes == 0 {
            return Err(DataError::Metadata("step_minutes must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Series(format!(
                "non-finite value at step {}, sensor {}",
                i / sensors,
                i % sensors
            )));
        }
        Ok(RawSeries {
            values,
            steps,
            sensors,
            meta,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// `(T_total, N, C)`; `C` is always 1.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.steps, self.sensors, 1)
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, step: usize, sensor: usize) -> f64 {
        self.values[step * self.sensors + sensor]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.values[step * self.sensors..(step + 1) * self.sensors]
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.meta.start_timestamp + Duration::minutes(step as i64 * self.meta.step_minutes as i64)
    }

    /// Same layout and metadata with every value mapped.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        RawSeries::new(
            self.values.iter().map(|&v| f(v)).collect(),
            self.steps,
            self.sensors,
            self.meta.clone(),
        )
    }
}

#[cfg(test)]
pub(crate) fn test_meta() -> SeriesMeta {
    SeriesMeta {
        start_timestamp: iso8601::parse("2018-01-01T00:00:00").unwrap(),
        step_minutes: 5,
        name: "test".into(),
    }
}
