//! Training loop (Adam + gradient clipping + early stopping with
//! best-epoch restoration), evaluation, and the ablation sweep.

pub mod adam;
pub mod metrics;

pub use adam::{adam_step, clip_gradients, AdamHyper, AdamState};
pub use metrics::{
    mae, r2, rmse, write_forecast_csv, write_loss_curve_csv, write_metrics_csv, HorizonMetrics,
    MetricsReport,
};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::WindowedDataset;
use crate::graph::NormalizedAdjacency;
use crate::model::{ForecastModel, ModelConfig};
use crate::rng::Rng;
use crate::tensor::{Tape, TensorId};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving validations before stopping.
    pub patience: usize,
    /// Improvement below this does not reset the patience counter.
    pub min_delta: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coupling added to gradients before the Adam update.
    pub weight_decay: f64,
    /// Optional success threshold: stop as soon as the epoch's training
    /// MSE drops below it (overfit experiments).
    pub stop_below_train_mse: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 20,
            min_delta: 1e-6,
            clip_norm: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            stop_below_train_mse: None,
            seed: 0,
        }
    }
}

/// Mean squared error between two tensors of equal shape, as a tape node.
pub fn mse_loss(tape: &mut Tape, pred: TensorId, target: TensorId) -> Result<TensorId> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::Dimension(format!(
            "mse over {:?} vs {:?}",
            tape.shape(pred),
            tape.shape(target)
        )));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean_all(sq)
}

/// Plain-slice MSE.
pub fn mse_scalar(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Contract("mse over an empty batch".into()));
    }
    if pred.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Patience-based stopper: an observation improves when it beats the best
/// seen by more than `min_delta`; `patience` consecutive non-improvements
/// stop the run.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns (improved, stop).
    pub fn observe(&mut self, epoch: usize, val: f64) -> (bool, bool) {
        if val < self.best - self.min_delta {
            self.best = val;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ForecastModel,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    /// 1-based epoch the loop stopped at (== max_epochs when patience
    /// never ran out).
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters are returned.
    pub best_epoch: usize,
}

/// Train with the standard validator (val-set MSE in scaled target space).
pub fn train(
    model: ForecastModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if val_set.is_empty() {
        return Err(Error::Contract("empty validation set".into()));
    }
    train_with_validator(model, train_set, adjacency, cfg, |m, _| {
        validation_mse(m, val_set, adjacency)
    })
}

/// Scaled-space MSE of a model over a dataset.
pub fn validation_mse(
    model: &ForecastModel,
    set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
) -> Result<f64> {
    let scaler = &set.features.scaler;
    let mut preds = Vec::with_capacity(set.len() * set.horizon);
    let mut targets = Vec::with_capacity(set.len() * set.horizon);
    for i in 0..set.len() {
        preds.extend(model.predict(&set.input(i), adjacency)?);
        targets.extend(set.samples[i].target.iter().map(|&y| scaler.scale(0, y)));
    }
    mse_scalar(&preds, &targets)
}

/// Core loop with an injectable validation hook (scripted in tests).
/// Shuffled minibatches, per-sample backward with gradient averaging,
/// global-norm clipping, Adam, epoch-level early stopping, best-epoch
/// snapshot restoration.
pub fn train_with_validator(
    mut model: ForecastModel,
    train_set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
    cfg: &TrainConfig,
    mut validate: impl FnMut(&ForecastModel, usize) -> Result<f64>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    if cfg.learning_rate <= 0.0 || cfg.patience == 0 || cfg.batch_size == 0 {
        return Err(Error::Contract(
            "learning rate, patience, and batch size must be positive".into(),
        ));
    }
    let scaler = train_set.features.scaler.clone();
    let trainable: Vec<usize> = (0..model.params.len())
        .filter(|&i| model.params[i].trainable)
        .collect();
    let sizes: Vec<usize> = trainable.iter().map(|&i| model.params[i].numel()).collect();
    let mut state = AdamState::new(&sizes);
    let hyper = AdamHyper {
        learning_rate: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };

    let mut root = Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = root.split(1);
    let mut dropout_rng = root.split(2);

    let mut stopper = EarlyStopper::new(cfg.patience, cfg.min_delta);
    let mut best_model = model.clone();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stopped_epoch = cfg.max_epochs;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_samples = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            for &sample in batch {
                let window = train_set.input(sample);
                let target: Vec<f64> = train_set.samples[sample]
                    .target
                    .iter()
                    .map(|&y| scaler.scale(0, y))
                    .collect();
                let mut tape = Tape::new();
                let pass = model.forward(&mut tape, &window, adjacency, Some(&mut dropout_rng))?;
                let t_id = tape.constant(target.clone(), vec![1, target.len()])?;
                let loss = mse_loss(&mut tape, pass.output, t_id)?;
                epoch_loss += tape.values(loss)[0];
                epoch_samples += 1;
                tape.backward(loss)?;
                for (slot, &pi) in trainable.iter().enumerate() {
                    let g = tape
                        .grad(pass.param_ids[pi])
                        .expect("trainable leaf has a gradient");
                    for (acc, gv) in grads[slot].iter_mut().zip(g) {
                        *acc += gv;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for (slot, &pi) in trainable.iter().enumerate() {
                for (g, p) in grads[slot]
                    .iter_mut()
                    .zip(&model.params[pi].values)
                {
                    *g = *g * inv + cfg.weight_decay * p;
                }
            }
            clip_gradients(&mut grads, cfg.clip_norm);
            let mut slots: Vec<&mut Vec<f64>> = Vec::with_capacity(trainable.len());
            // Split borrows: collect raw pointers through indices.
            let params = &mut model.params;
            {
                let mut taken: Vec<Option<&mut Vec<f64>>> =
                    params.iter_mut().map(|p| Some(&mut p.values)).collect();
                for &pi in &trainable {
                    slots.push(taken[pi].take().expect("unique index"));
                }
                adam_step(&mut slots, &grads, &mut state, &hyper);
            }
        }
        let train_mse = epoch_loss / epoch_samples as f64;
        if !train_mse.is_finite() {
            return Err(Error::Divergence(format!(
                "training loss became {train_mse} at epoch {epoch}"
            )));
        }
        train_curve.push(train_mse);
        if cfg.stop_below_train_mse.is_some_and(|th| train_mse < th) {
            best_model = model.clone();
            stopped_epoch = epoch;
            stopper.observe(epoch, train_mse);
            val_curve.push(train_mse);
            break;
        }

        let val = validate(&model, epoch)?;
        if !val.is_finite() {
            return Err(Error::Divergence(format!(
                "validation loss became {val} at epoch {epoch}"
            )));
        }
        val_curve.push(val);
        let (improved, stop) = stopper.observe(epoch, val);
        if improved {
            best_model = model.clone();
        }
        if stop {
            stopped_epoch = epoch;
            break;
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        train_curve,
        val_curve,
        stopped_epoch,
        best_epoch: stopper.best_epoch(),
    })
}

/// Evaluate a trained model on a test split. Predictions are
/// inverse-scaled to raw percent before the metrics; `measure_timing`
/// additionally reports mean wall-clock per-sample inference time
/// (non-deterministic, so opt-in).
pub fn evaluate(
    model: &ForecastModel,
    test_set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
    measure_timing: bool,
) -> Result<HorizonMetrics> {
    if test_set.is_empty() {
        return Err(Error::Contract("empty test set".into()));
    }
    let scaler = &test_set.features.scaler;
    let mut preds = Vec::with_capacity(test_set.len() * test_set.horizon);
    let mut actuals = Vec::with_capacity(test_set.len() * test_set.horizon);
    let started = Instant::now();
    for i in 0..test_set.len() {
        let out = model.predict(&test_set.input(i), adjacency)?;
        preds.extend(out.iter().map(|&v| scaler.unscale(0, v)));
        actuals.extend_from_slice(&test_set.samples[i].target);
    }
    let elapsed = started.elapsed();
    Ok(HorizonMetrics {
        horizon: test_set.horizon,
        rmse: rmse(&preds, &actuals)?,
        mae: mae(&preds, &actuals)?,
        r2: r2(&preds, &actuals)?,
        inference_ms: measure_timing
            .then(|| elapsed.as_secs_f64() * 1e3 / test_set.len() as f64),
    })
}

/// Raw-percent (timestamp, actual, predicted) rows for the forecast dump;
/// one row per test window at the final horizon step.
pub fn forecast_rows(
    model: &ForecastModel,
    test_set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
) -> Result<Vec<(chrono::NaiveDateTime, f64, f64)>> {
    let scaler = &test_set.features.scaler;
    let p = test_set.horizon;
    let mut rows = Vec::with_capacity(test_set.len());
    for i in 0..test_set.len() {
        let out = model.predict(&test_set.input(i), adjacency)?;
        rows.push((
            test_set.target_time(i, p - 1),
            test_set.samples[i].target[p - 1],
            scaler.unscale(0, out[p - 1]),
        ));
    }
    Ok(rows)
}

/// One row of the ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub label: String,
    pub metrics: HorizonMetrics,
}

/// Nested ablation in the reporting order: full model, then time-level
/// attention removed, then additionally the LSTM, the feature-level
/// attention, and the district-level attention. Same seed and data for
/// every row.
pub fn ablation_sweep(
    base: &ModelConfig,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    test_set: &WindowedDataset,
    adjacency: &NormalizedAdjacency,
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    type Tweak = Box<dyn Fn(&mut ModelConfig)>;
    let variants: Vec<(&str, Tweak)> = vec![
        ("full", Box::new(|_| {})),
        ("-t_atten", Box::new(|c| c.use_time_attention = false)),
        (
            "-t_atten-lstm",
            Box::new(|c| {
                c.use_time_attention = false;
                c.use_lstm = false;
            }),
        ),
        (
            "-t_atten-lstm-f_atten",
            Box::new(|c| {
                c.use_time_attention = false;
                c.use_lstm = false;
                c.use_feature_attention = false;
            }),
        ),
        (
            "-t_atten-lstm-f_atten-d_atten",
            Box::new(|c| {
                c.use_time_attention = false;
                c.use_lstm = false;
                c.use_feature_attention = false;
                c.use_node_attention = false;
            }),
        ),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (label, tweak) in variants {
        let mut config = base.clone();
        tweak(&mut config);
        let model = ForecastModel::new(config)?;
        let outcome = train(model, train_set, val_set, adjacency, cfg)?;
        let metrics = evaluate(&outcome.model, test_set, adjacency, false)?;
        rows.push(AblationRow {
            label: label.to_string(),
            metrics,
        });
    }
    Ok(rows)
}

/// `architecture,horizon,rmse,mae,r2` table for the ablation artifact.
pub fn write_ablation_csv(rows: &[AblationRow], path: &std::path::Path) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "architecture,horizon,rmse,mae,r2")?;
    for r in rows {
        let r2_cell = r.metrics.r2.map(|v| format!("{v}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.label, r.metrics.horizon, r.metrics.rmse, r.metrics.mae, r2_cell
        )?;
    }
    out.flush()?;
    Ok(())
}
