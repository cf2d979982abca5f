use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Train/validation/test fractions, applied chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatio {
    pub const SIX_TWO_TWO: SplitRatio = SplitRatio {
        train: 0.6,
        val: 0.2,
        test: 0.2,
    };
    pub const SEVEN_ONE_TWO: SplitRatio = SplitRatio {
        train: 0.7,
        val: 0.1,
        test: 0.2,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let parts = [train, val, test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(DataError::Config(format!(
                "split fractions must be positive, got {train}:{val}:{test}"
            )));
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!(
                "split fractions must sum to 1, got {}",
                train + val + test
            )));
        }
        Ok(SplitRatio { train, val, test })
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::SIX_TWO_TWO
    }
}

/// Accepts `"6:2:2"`-style parts (normalized by their sum) or `"0.7:0.1:0.2"`.
impl FromStr for SplitRatio {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| DataError::Config(format!("cannot parse split ratio {s:?}")))?;
        if parts.len() != 3 {
            return Err(DataError::Config(format!("split ratio needs three parts, got {s:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if !(sum > 0.0) {
            return Err(DataError::Config(format!("split ratio {s:?} sums to {sum}")));
        }
        match s.trim() {
            "6:2:2" => Ok(SplitRatio::SIX_TWO_TWO),
            "7:1:2" => Ok(SplitRatio::SEVEN_ONE_TWO),
            _ => SplitRatio::new(parts[0] / sum, parts[1] / sum, parts[2] / sum),
        }
    }
}

impl TryFrom<String> for SplitRatio {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SplitRatio> for String {
    fn from(r: SplitRatio) -> String {
        r.to_string()
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == SplitRatio::SIX_TWO_TWO {
            f.write_str("6:2:2")
        } else if *self == SplitRatio::SEVEN_ONE_TWO {
            f.write_str("7:1:2")
        } else {
            write!(f, "{}:{}:{}", self.train, self.val, self.test)
        }
    }
}

/// `(floor(r_train·total), floor(r_val·total), remainder)`.
pub fn split_counts(total: usize, ratio: SplitRatio) -> Result<(usize, usize, usize)> {
    // the epsilon absorbs representation error, e.g. 0.7·10 = 6.999…
    let floor = |r: f64| (total as f64 * r + 1e-9).floor() as usize;
    let train = floor(ratio.train);
    let val = floor(ratio.val);
    let test = total.saturating_sub(train + val);
    if train == 0 || val == 0 || test == 0 {
        return Err(DataError::Config(format!(
            "{total} samples with ratio {ratio} leave an empty split ({train}/{val}/{test})"
        )));
    }
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(split_counts(10, SplitRatio::SIX_TWO_TWO).unwrap(), (6, 2, 2));
        assert_eq!(split_counts(16969, SplitRatio::SIX_TWO_TWO).unwrap(), (10181, 3393, 3395));
        assert_eq!(split_counts(10, SplitRatio::SEVEN_ONE_TWO).unwrap(), (7, 1, 2));
        assert!(split_counts(3, SplitRatio::SIX_TWO_TWO).is_err());
    }

    #[test]
    fn parsing() {
        assert_eq!("7:1:2".parse::<SplitRatio>().unwrap(), SplitRatio::SEVEN_ONE_TWO);
        let r: SplitRatio = "0.5:0.25:0.25".parse().unwrap();
        assert_eq!(r.train, 0.5);
        assert!("1:2".parse::<SplitRatio>().is_err());
        assert!("1:0:1".parse::<SplitRatio>().is_err());
        assert!(SplitRatio::new(0.5, 0.5, 0.5).is_err());
        let json = serde_json::to_string(&SplitRatio::SIX_TWO_TWO).unwrap();
        assert_eq!(json, "\"6:2:2\"");
    }
}
