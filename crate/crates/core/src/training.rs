//! Mini-batch training with Adam and early stopping, plus evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowDataset;
use crate::error::{Result, TriformerError};
use crate::model::TriformerModel;
use crate::tensor::{adam_step, AdamConfig, Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch: 32,
            max_epochs: 10,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TriformerError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, v) in [("batch", self.batch), ("max_epochs", self.max_epochs), ("patience", self.patience)] {
            if v == 0 {
                return Err(TriformerError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    /// Validation metrics of the best epoch.
    pub metrics: Metrics,
    /// Validation metrics before any update.
    pub initial_metrics: Metrics,
    pub wall_seconds: f64,
    pub checkpoint: Option<String>,
}

/// Anything that maps `[B, N, H]` inputs to `[B, N, F]` forecasts.
pub trait Forecaster {
    fn forecast(&self, x: &Tensor) -> Result<Tensor>;
}

impl Forecaster for TriformerModel {
    fn forecast(&self, x: &Tensor) -> Result<Tensor> {
        self.predict(x)
    }
}

const EVAL_BATCH: usize = 128;

/// MSE and MAE averaged over every window, variable and horizon step.
/// Accumulation follows window order, so repeated calls agree bitwise.
pub fn evaluate<M: Forecaster + ?Sized>(model: &M, windows: &WindowDataset) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(TriformerError::Data("no windows to evaluate".into()));
    }
    let indices: Vec<usize> = (0..windows.len()).collect();
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, y) = windows.batch(chunk);
        let pred = model.forecast(&x)?;
        if pred.shape() != y.shape() {
            return Err(TriformerError::Shape(format!(
                "forecast shape {:?} does not match targets {:?}",
                pred.shape(),
                y.shape()
            )));
        }
        for (p, t) in pred.data().iter().zip(y.data()) {
            sq += (p - t) * (p - t);
            abs += (p - t).abs();
        }
        count += y.numel();
    }
    Ok(Metrics {
        mse: sq / count as f64,
        mae: abs / count as f64,
    })
}

/// Repeats the last observed value across `horizon` steps.
pub struct Persistence {
    pub horizon: usize,
}

impl Forecaster for Persistence {
    fn forecast(&self, x: &Tensor) -> Result<Tensor> {
        let [b, n, h] = x.shape()[..] else {
            return Err(TriformerError::Shape("persistence expects [B, N, H]".into()));
        };
        let f = self.horizon;
        let mut data = Vec::with_capacity(b * n * f);
        for row in x.data().chunks_exact(h) {
            data.extend(std::iter::repeat_n(row[h - 1], f));
        }
        Tensor::new(&[b, n, f], data)
    }
}

/// Metrics of the persistence forecast `x̂_{t+k} = x_t`.
pub fn persistence_baseline(windows: &WindowDataset) -> Result<Metrics> {
    evaluate(
        &Persistence {
            horizon: windows.horizon(),
        },
        windows,
    )
}

/// Outcome of feeding one validation score to [`EarlyStopping`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping on strict improvement of the validation score.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if score >= best => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Trains `model` in place and leaves it holding the best-epoch parameters.
pub fn train(
    model: &mut TriformerModel,
    train_set: &WindowDataset,
    val_set: &WindowDataset,
    cfg: &TrainConfig,
) -> Result<RunHistory> {
    train_with_observer(model, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_observer(
    model: &mut TriformerModel,
    train_set: &WindowDataset,
    val_set: &WindowDataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<RunHistory> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TriformerError::Data("training and validation need at least one window".into()));
    }
    let started = Instant::now();
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let initial_metrics = evaluate(model, val_set)?;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params().snapshot();
    let mut best_metrics = initial_metrics;
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_index, chunk) in order.chunks(cfg.batch).enumerate() {
            let (x, y) = train_set.batch(chunk);
            let nonfinite = |e: TriformerError| match e {
                TriformerError::NonFinite(op) => TriformerError::NonFinite(format!(
                    "{op} in epoch {epoch}, batch {batch_index}"
                )),
                other => other,
            };
            let mut g = Graph::new();
            let pred = model.forward(&mut g, &x).map_err(nonfinite)?;
            let target = g.constant(y)?;
            let loss = g.mse(pred, target).map_err(nonfinite)?;
            let loss_value = g.value(loss).data()[0];
            let store = model.params_mut();
            store.zero_grad();
            g.backward(loss, store)?;
            adam_step(store, &adam);
            if store.iter().any(|p| !p.value.is_finite()) {
                return Err(TriformerError::NonFinite(format!(
                    "parameter update in epoch {epoch}, batch {batch_index}"
                )));
            }
            loss_sum += loss_value * chunk.len() as f64;
        }

        let val = evaluate(model, val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_mse: val.mse,
            val_mae: val.mae,
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        };
        observer(&record);
        epochs.push(record);

        match stopper.observe(epoch, val.mse) {
            StopDecision::Improved => {
                best_params = model.params().snapshot();
                best_metrics = val;
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    model.params_mut().restore(&best_params)?;
    let (best_epoch, _) = stopper.best().expect("at least one epoch ran");
    Ok(RunHistory {
        epochs,
        best_epoch,
        metrics: best_metrics,
        initial_metrics,
        wall_seconds: started.elapsed().as_secs_f64(),
        checkpoint: None,
    })
}
