//! Windowing, splitting and normalization against direct enumeration.

use std::sync::Arc;

use chrono::NaiveDate;
use fptn::data::{
    decode_binary, encode_binary, iterate_batches, make_windows, split_counts, window_count, NormStats,
    PreparedData, RawSeries, SeriesMeta, SplitRatio,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meta() -> SeriesMeta {
    SeriesMeta {
        start_timestamp: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        step_minutes: 5,
        name: String::new(),
    }
}

fn brute_windows(steps: usize, t: usize, k: usize) -> usize {
    (0..steps).filter(|&s| s + t + k <= steps).count()
}

/// Integer-exact `floor(total · num / 10)` by enumeration.
fn brute_floor_share(total: usize, num: usize) -> usize {
    (0..total).filter(|&i| 10 * (i + 1) <= num * total).count()
}

#[test]
fn window_and_split_counts_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let steps = rng.gen_range(40..5000);
        let t = rng.gen_range(1..25);
        let k = rng.gen_range(1..25);
        let total = window_count(steps, t, k);
        assert_eq!(total, brute_windows(steps, t, k));
        let (tr, va, te) = split_counts(total, SplitRatio::SIX_TWO_TWO).unwrap();
        assert_eq!(tr, brute_floor_share(total, 6));
        assert_eq!(va, brute_floor_share(total, 2));
        assert_eq!(tr + va + te, total);
    }
}

#[test]
fn pems04_sized_series() {
    assert_eq!(window_count(16992, 12, 12), 16969);
    assert_eq!(split_counts(16969, SplitRatio::SIX_TWO_TWO).unwrap(), (10181, 3393, 3395));
}

#[test]
fn windows_follow_the_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (steps, n) = (60, 3);
    let values: Vec<f64> = (0..steps * n).map(|_| rng.gen_range(0.0..100.0)).collect();
    let raw = Arc::new(RawSeries::new(values.clone(), steps, n, meta()).unwrap());
    let set = make_windows(raw, None, 5, 4).unwrap();
    for i in [0, 17, set.len() - 1] {
        let s = set.get(i);
        for sensor in 0..n {
            for j in 0..5 {
                assert_eq!(s.x[sensor * 5 + j], values[(i + j) * n + sensor]);
            }
            for j in 0..4 {
                assert_eq!(s.y[sensor * 4 + j], values[(i + 5 + j) * n + sensor]);
            }
        }
    }
}

#[test]
fn normalization_uses_training_steps_only() {
    let (steps, n) = (200, 2);
    let mut values: Vec<f64> = (0..steps * n).map(|i| (i % 7) as f64).collect();
    let data = PreparedData::new(&RawSeries::new(values.clone(), steps, n, meta()).unwrap(), 12, 12, SplitRatio::default())
        .unwrap();
    let (tr, _, _) = split_counts(window_count(steps, 12, 12), SplitRatio::default()).unwrap();
    let train_steps = tr - 1 + 24;
    let expect = NormStats::fit(&values[..train_steps * n]).unwrap();
    assert_eq!(data.stats, expect);
    // perturbing anything after the training steps leaves the statistics alone
    for v in &mut values[train_steps * n..] {
        *v += 1000.0;
    }
    let again = PreparedData::new(&RawSeries::new(values, steps, n, meta()).unwrap(), 12, 12, SplitRatio::default())
        .unwrap();
    assert_eq!(again.stats, expect);
}

#[test]
fn splits_are_contiguous_and_ordered() {
    let raw = RawSeries::new((0..300).map(|v| v as f64).collect(), 300, 1, meta()).unwrap();
    let data = PreparedData::new(&raw, 12, 12, SplitRatio::SEVEN_ONE_TWO).unwrap();
    let last_train = data.train.get(data.train.len() - 1).start;
    assert_eq!(data.val.get(0).start, last_train + 1);
    assert_eq!(data.test.get(0).start, data.val.get(data.val.len() - 1).start + 1);
}

#[test]
fn batches_cover_every_window_once() {
    let raw = Arc::new(RawSeries::new((0..90).map(|v| v as f64).collect(), 45, 2, meta()).unwrap());
    let set = make_windows(raw, None, 4, 3).unwrap();
    let mut seen: Vec<usize> = iterate_batches(&set, 7, true, 3).unwrap().flat_map(|b| b.indices).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..set.len()).collect::<Vec<_>>());
}

#[test]
fn binary_encoding_round_trips_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (t, n) = (rng.gen_range(1..50), rng.gen_range(1..6));
        let v: Vec<f64> = (0..t * n).map(|_| rng.gen_range(-1e6..1e6)).collect();
        let s = RawSeries::new(v, t, n, meta()).unwrap();
        assert_eq!(decode_binary(&encode_binary(&s)).unwrap(), s);
    }
}
