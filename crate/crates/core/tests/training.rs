use triformer_core::data::{split, synth, windows, SeriesTable, SplitSpec, StandardizeStats, WindowDataset};
use triformer_core::training::{evaluate, persistence_baseline, train, Forecaster, TrainConfig};
use triformer_core::{Result, Tensor, TriformerConfig, TriformerError, TriformerModel, VsmMode};

/// Looks up the true continuation of each input window in the segment.
struct ExactTargets<'a>(&'a WindowDataset);

impl Forecaster for ExactTargets<'_> {
    fn forecast(&self, x: &Tensor) -> Result<Tensor> {
        let ds = self.0;
        let (n, h, f) = (ds.n_vars(), ds.lookback(), ds.horizon());
        let mut out = Vec::new();
        for window in x.data().chunks(n * h) {
            let k = (0..ds.len())
                .find(|&k| ds.batch(&[k]).0.data() == window)
                .expect("window comes from the dataset");
            out.extend_from_slice(ds.batch(&[k]).1.data());
        }
        Tensor::new(&[x.shape()[0], n, f], out)
    }
}

/// Deterministic pseudo-random output keyed on the input values.
struct Scrambler(usize);

impl Scrambler {
    fn value(x: &[f64], j: usize) -> f64 {
        let s: f64 = x.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.3)).sum();
        (s * 12.9898 + j as f64 * 78.233).sin() * 2.0
    }
}

impl Forecaster for Scrambler {
    fn forecast(&self, x: &Tensor) -> Result<Tensor> {
        let [b, n, h] = x.shape()[..] else { unreachable!() };
        let data = x
            .data()
            .chunks(h)
            .flat_map(|row| (0..self.0).map(move |j| Scrambler::value(row, j)))
            .collect();
        Tensor::new(&[b, n, self.0], data)
    }
}

fn toy_dataset() -> WindowDataset {
    let table = synth(2, 60, 3, 1.0);
    windows(&table, 8, 3).unwrap()
}

#[test]
fn exact_forecasts_score_zero() {
    let ds = toy_dataset();
    let m = evaluate(&ExactTargets(&ds), &ds).unwrap();
    assert_eq!((m.mse, m.mae), (0.0, 0.0));
}

#[test]
fn metrics_match_a_scalar_loop() {
    let ds = synth(3, 400, 5, 1.0);
    let ds = windows(&ds, 12, 4).unwrap();
    let m = evaluate(&Scrambler(4), &ds).unwrap();

    let (mut sq, mut abs, mut count) = (0.0, 0.0, 0usize);
    let segment = ds.segment();
    for w in ds.iter() {
        for var in 0..ds.n_vars() {
            let input: Vec<f64> = w.input.clone().map(|r| segment.value(r, var)).collect();
            for (j, r) in w.target.clone().enumerate() {
                let e = Scrambler::value(&input, j) - segment.value(r, var);
                sq += e * e;
                abs += e.abs();
                count += 1;
            }
        }
    }
    assert!((m.mse - sq / count as f64).abs() < 1e-12);
    assert!((m.mae - abs / count as f64).abs() < 1e-12);
}

#[test]
fn persistence_on_a_slow_sinusoid_beats_the_variance() {
    let values: Vec<f64> = (0..500).map(|t| (t as f64 * std::f64::consts::TAU / 200.0).sin()).collect();
    let table = SeriesTable::new(vec!["s".into()], None, values).unwrap();
    let ds = windows(&table, 24, 4).unwrap();
    let m = persistence_baseline(&ds).unwrap();
    // series variance is 1/2
    assert!(m.mse < 0.05 * 0.5, "{}", m.mse);
}

fn desk(n: usize, t: usize) -> (WindowDataset, WindowDataset) {
    let table = synth(n, t, 11, 1.0);
    let parts = split(&table, &SplitSpec::default(), 40).unwrap();
    let stats = StandardizeStats::fit(&parts.train).unwrap();
    (
        windows(&stats.apply(&parts.train).unwrap(), 24, 4).unwrap(),
        windows(&stats.apply(&parts.val).unwrap(), 24, 4).unwrap(),
    )
}

fn tiny_model(vsm: VsmMode) -> TriformerModel {
    let mut cfg = TriformerConfig::new(24, 4, 3, vec![4, 3, 2]);
    cfg.d = 8;
    cfg.m = 3;
    cfg.a = 3;
    cfg.vsm = vsm;
    TriformerModel::new(cfg).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        batch: 16,
        max_epochs: 3,
        patience: 3,
        seed: 5,
    }
}

#[test]
fn training_improves_validation_error_and_keeps_the_best_epoch() {
    let (train_set, val_set) = desk(3, 600);
    let mut model = tiny_model(VsmMode::Light);
    let history = train(&mut model, &train_set, &val_set, &quick()).unwrap();
    assert!(history.metrics.mse < history.initial_metrics.mse);
    let best = history.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(history.metrics.mse, best);
    assert_eq!(history.epochs[history.best_epoch - 1].val_mse, best);
    // the restored parameters are the best epoch's
    assert_eq!(evaluate(&model, &val_set).unwrap(), history.metrics);
}

#[test]
fn same_seed_same_history() {
    let (train_set, val_set) = desk(3, 400);
    let run = || {
        let mut model = tiny_model(VsmMode::Light);
        let h = train(&mut model, &train_set, &val_set, &quick()).unwrap();
        let losses: Vec<(u64, u64)> = h
            .epochs
            .iter()
            .map(|e| (e.train_loss.to_bits(), e.val_mse.to_bits()))
            .collect();
        (losses, model.params().snapshot())
    };
    assert_eq!(run(), run());
}

#[test]
fn evaluation_is_idempotent_and_read_only() {
    let (_, val_set) = desk(3, 400);
    let model = tiny_model(VsmMode::Naive);
    let before = model.params().snapshot();
    let a = evaluate(&model, &val_set).unwrap();
    let b = evaluate(&model, &val_set).unwrap();
    assert_eq!(a.mse.to_bits(), b.mse.to_bits());
    assert_eq!(a.mae.to_bits(), b.mae.to_bits());
    assert_eq!(before, model.params().snapshot());
}

#[test]
fn light_training_moves_the_memories() {
    let (train_set, val_set) = desk(3, 400);
    let mut model = tiny_model(VsmMode::Light);
    let id = model.memory().unwrap().memory;
    let before = model.params().value(id).clone();
    let cfg = TrainConfig { max_epochs: 1, ..quick() };
    train(&mut model, &train_set, &val_set, &cfg).unwrap();
    assert!(before.max_abs_diff(model.params().value(id)) > 0.0);
}

#[test]
fn divergence_names_the_batch() {
    let (train_set, val_set) = desk(3, 400);
    let mut model = tiny_model(VsmMode::Off);
    let cfg = TrainConfig { lr: 1e300, ..quick() };
    let err = train(&mut model, &train_set, &val_set, &cfg).unwrap_err();
    let TriformerError::NonFinite(msg) = err else { panic!("{err:?}") };
    assert!(msg.contains("batch"), "{msg}");
}

#[test]
fn early_stopping_restores_a_minimum() {
    let (train_set, val_set) = desk(3, 400);
    let mut model = tiny_model(VsmMode::Off);
    let cfg = TrainConfig {
        lr: 0.05,
        max_epochs: 6,
        patience: 1,
        ..quick()
    };
    let h = train(&mut model, &train_set, &val_set, &cfg).unwrap();
    assert!(h.epochs.iter().all(|e| h.metrics.mse <= e.val_mse));
}
