//! Structural properties of the network checked against brute-force references.

use fptn::model::{ModelConfig, PositionalMode};
use fptn::tape::RunningStats;
use fptn::{BatchNormState, Model, NormMode, Tape, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor64 {
    Tensor64::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn with_random_stats(model: &mut Model, rng: &mut ChaCha8Rng) {
    let d = model.config().d_model;
    for pair in model.norms_mut() {
        for st in pair.iter_mut() {
            *st = BatchNormState {
                running: Some(RunningStats {
                    mean: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                    var: (0..d).map(|_| rng.gen_range(0.5..2.0)).collect(),
                }),
                ..BatchNormState::default()
            };
        }
    }
}

fn permute_sensors(t: &Tensor64, perm: &[usize]) -> Tensor64 {
    let s = t.shape();
    let (b, n, w) = (s[0], s[1], s[2]);
    Tensor64::from_fn(s, |i| {
        let (bi, rest) = (i / (n * w), i % (n * w));
        let (ni, wi) = (rest / w, rest % w);
        t.data()[bi * n * w + perm[ni] * w + wi]
    })
    .reshape(&[b, n, w])
    .unwrap()
}

#[test]
fn permutation_equivariance_without_positional() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = ModelConfig::new(6, 4, 3, 16, 4, 2)
        .with_embeddings(true, PositionalMode::None)
        .with_seed(2);
    let mut model = Model::new(cfg).unwrap();
    with_random_stats(&mut model, &mut rng);
    let x = random(&mut rng, &[2, 6, 4]);
    // time features are shared across sensors in a window
    let row = random(&mut rng, &[1, 1, 12]);
    let tf = Tensor64::from_fn(&[2, 6, 12], |i| row.data()[i % 12]);
    let base = model.predict(&x, Some(&tf)).unwrap();
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..6).collect();
        perm.sort_by_key(|_| rng.gen::<u32>());
        let out = model
            .predict(&permute_sensors(&x, &perm), Some(&permute_sensors(&tf, &perm)))
            .unwrap();
        let expected = permute_sensors(&base, &perm);
        assert!(out.max_abs_diff(&expected) < 1e-10);
    }
}

#[test]
fn learnable_positional_breaks_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ModelConfig::new(5, 4, 2, 8, 2, 1).with_seed(3);
    let mut model = Model::new(cfg).unwrap();
    with_random_stats(&mut model, &mut rng);
    let x = random(&mut rng, &[1, 5, 4]);
    let tf = Tensor64::zeros(&[1, 5, 12]);
    let perm = [1, 0, 2, 3, 4];
    let a = permute_sensors(&model.predict(&x, Some(&tf)).unwrap(), &perm);
    let b = model.predict(&permute_sensors(&x, &perm), Some(&tf)).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-8);
}

#[test]
fn attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..5 {
        let cfg = ModelConfig::new(4 + trial, 4, 2, 16, 4, 2).with_seed(trial as u64);
        let mut model = Model::new(cfg).unwrap();
        let x = random(&mut rng, &[3, 4 + trial, 4]);
        let tf = random(&mut rng, &[3, 4 + trial, 12]);
        let mut tape = Tape::new();
        let pass = model.forward(&mut tape, &x, Some(&tf), NormMode::Train).unwrap();
        for w in pass.attention {
            let t = tape.value(w);
            let n = t.shape()[2];
            for row in t.data().chunks(n) {
                assert!(row.iter().all(|&v| v >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parameter_count_matches_arrays() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let heads = [1, 2, 4][rng.gen_range(0..3)];
        let d = heads * rng.gen_range(3..6);
        let t = rng.gen_range(1..d);
        let te = rng.gen_bool(0.5);
        let pe = PositionalMode::ALL[rng.gen_range(0..3)];
        let cfg = ModelConfig::new(rng.gen_range(1..9), t, rng.gen_range(1..5), d, heads, rng.gen_range(0..3))
            .with_embeddings(te, pe);
        let model = Model::new(cfg.clone()).unwrap();
        let by_shapes: usize = model.params().named().iter().map(|(_, a)| a.shape().iter().product::<usize>()).sum();
        assert_eq!(by_shapes, cfg.parameter_count(), "{cfg:?}");
    }
}

#[test]
fn token_width_independent_of_sensor_count() {
    for n in [3, 40] {
        let model = Model::new(ModelConfig::new(n, 12, 12, 16, 2, 1)).unwrap();
        assert_eq!(model.params().traffic_w.shape(), &[12, 16]);
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (layers, te, pe) in [
        (1, true, PositionalMode::Learnable),
        (0, true, PositionalMode::Learnable),
        (2, false, PositionalMode::Fixed),
    ] {
        let cfg = ModelConfig::new(3, 4, 2, 8, 2, layers).with_embeddings(te, pe).with_seed(4);
        let mut model = Model::new(cfg).unwrap();
        with_random_stats(&mut model, &mut rng);
        let x = random(&mut rng, &[2, 3, 4]);
        let tf = random(&mut rng, &[2, 3, 12]);
        let y = random(&mut rng, &[2, 3, 2]);
        for mode in [NormMode::Eval, NormMode::Train] {
            let report = model.check_gradients(&x, Some(&tf), &y, mode, 1e-5, 1e-4).unwrap();
            assert!(report.passed(), "L={layers} {mode:?}: {:?}", report.failing().collect::<Vec<_>>());
        }
    }
}

#[test]
fn train_mode_updates_running_stats_eval_does_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Model::new(ModelConfig::new(4, 4, 2, 8, 2, 1)).unwrap();
    let x = random(&mut rng, &[2, 4, 4]);
    let tf = random(&mut rng, &[2, 4, 12]);
    let mut tape = Tape::new();
    model.forward(&mut tape, &x, Some(&tf), NormMode::Train).unwrap();
    let after_train = model.norms().to_vec();
    assert!(after_train[0][0].running.is_some());
    let mut tape = Tape::new();
    model.forward(&mut tape, &x, Some(&tf), NormMode::Eval).unwrap();
    assert_eq!(model.norms(), &after_train[..]);
}

#[test]
fn f32_model_runs() {
    let mut model = fptn::Model32::new(ModelConfig::new(3, 4, 2, 8, 2, 1)).unwrap();
    model.set_unit_norm_stats();
    let x = fptn::Tensor32::from_fn(&[1, 3, 4], |i| i as f32 * 0.1);
    let tf = fptn::Tensor32::zeros(&[1, 3, 12]);
    let out = model.predict(&x, Some(&tf)).unwrap();
    assert_eq!(out.shape(), &[1, 3, 2]);
    assert!(out.all_finite());
}
