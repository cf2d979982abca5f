use chrono::{Datelike, Duration, NaiveDateTime, Timelike};

/// Min-max scaled (day-of-week, hour-of-day, minute-of-hour) for `steps`
/// consecutive steps, laid out as `[D₁..D_T, H₁..H_T, M₁..M_T]`.
///
/// Monday is day 0. Minutes are scaled by 55, the last slot of a 5-minute grid.
pub fn build_time_features(
    start: NaiveDateTime,
    step_minutes: u32,
    window_start: usize,
    steps: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; 3 * steps];
    for i in 0..steps {
        let ts = start + Duration::minutes(((window_start + i) as i64) * step_minutes as i64);
        out[i] = ts.weekday().num_days_from_monday() as f64 / 6.0;
        out[steps + i] = ts.hour() as f64 / 23.0;
        out[2 * steps + i] = (ts.minute() as f64 / 55.0).min(1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").unwrap()
    }

    #[test]
    fn calendar_examples() {
        // 2018-01-01 is a Monday
        assert_eq!(build_time_features(at("2018-01-01T00:00:00"), 5, 0, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(build_time_features(at("2018-01-07T23:55:00"), 5, 0, 1), vec![1.0, 1.0, 1.0]);
        let tf = build_time_features(at("2018-01-01T23:55:00"), 5, 0, 2);
        assert_eq!(tf, vec![0.0, 1.0 / 6.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn window_offset_shifts_start() {
        let a = build_time_features(at("2018-01-01T00:00:00"), 5, 288, 3);
        let b = build_time_features(at("2018-01-02T00:00:00"), 5, 0, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
