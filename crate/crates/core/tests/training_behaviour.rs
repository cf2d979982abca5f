//! End-to-end training properties on small synthetic series.

use fptn::data::{PreparedData, SplitRatio};
use fptn::model::{CheckpointMeta, ModelConfig};
use fptn::synthetic::{generate, last_value_metrics, SyntheticSpec};
use fptn::training::{evaluate_split, StopReason, TrainConfig, Trainer};
use fptn::{Checkpoint, Model, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_data() -> PreparedData {
    let raw = generate(&SyntheticSpec::two_phase(4, 288 * 2, 0.0, 0)).unwrap();
    PreparedData::new(&raw, 12, 12, SplitRatio::default()).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        lr: 2e-3,
        patience: epochs,
        seed: 7,
        ..Default::default()
    }
}

fn strip_timing(h: &fptn::training::History) -> Vec<(usize, f64, f64, f64)> {
    h.records.iter().map(|r| (r.epoch, r.train_loss, r.val_mae, r.val_rmse)).collect()
}

#[test]
fn fixed_seed_reproduces_history() {
    let data = small_data();
    let run = || {
        let model = Model::new(ModelConfig::new(4, 12, 12, 16, 2, 1).with_seed(3)).unwrap();
        Trainer::new(model, cfg(3)).unwrap().fit(&data.train, &data.val).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(strip_timing(&a.history), strip_timing(&b.history));
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn training_reduces_validation_error() {
    let data = small_data();
    let model = Model::new(ModelConfig::new(4, 12, 12, 16, 2, 1).with_seed(1)).unwrap();
    let out = Trainer::new(model, cfg(15)).unwrap().fit(&data.train, &data.val).unwrap();
    let first = out.history.records[0].val_mae;
    let best = out.best_val.unwrap().mae;
    assert!(best < first, "{best} !< {first}");
    assert_eq!(out.stop, StopReason::EpochLimit);
    let again = evaluate_split(&out.model, &data.val, 64, 1e-3).unwrap();
    assert!((again.mae - best).abs() < 1e-12);
}

#[test]
fn baseline_is_finite_and_positive_on_cyclic_data() {
    let data = small_data();
    let m = last_value_metrics(&data.test, 1e-3);
    assert!(m.mae > 0.0 && m.mae.is_finite());
}

#[test]
fn huge_learning_rate_stops_cleanly() {
    let data = small_data();
    let model = Model::new(ModelConfig::new(4, 12, 12, 16, 2, 1)).unwrap();
    let tc = TrainConfig { lr: 1e12, ..cfg(3) };
    // the run either survives or reports divergence; it never panics or errors out
    let out = Trainer::new(model, tc).unwrap().fit(&data.train, &data.val).unwrap();
    if let StopReason::Diverged { .. } = out.stop {
        assert!(out.history.len() < 3);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let data = small_data();
    let model = Model::new(ModelConfig::new(4, 12, 12, 16, 2, 2).with_seed(5)).unwrap();
    let out = Trainer::new(model, cfg(1)).unwrap().fit(&data.train, &data.val).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let meta = CheckpointMeta {
        zscore: Some(data.stats),
        ..Default::default()
    };
    Checkpoint::new(out.model.clone(), meta.clone()).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.meta, meta);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let x = Tensor64::from_fn(&[2, 4, 12], |_| rng.gen_range(-2.0..2.0));
        let tf = Tensor64::from_fn(&[2, 4, 36], |_| rng.gen_range(0.0..1.0));
        let a = out.model.predict(&x, Some(&tf)).unwrap();
        let b = back.model.predict(&x, Some(&tf)).unwrap();
        let bits = |t: &Tensor64| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
