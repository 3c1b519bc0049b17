use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::normalize::{Denorm, Normalization, Scaler};
use super::window::Window;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{adam_step, AdamConfig, LossKind, Matrix, OptimizerState, ParameterStore, Tape};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub l1_lambda: f64,
    /// Evaluations without improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub eval_every: usize,
    /// Seeds the mini-batch shuffler.
    pub seed: u64,
    pub loss_kind: LossKind,
    pub normalization: Normalization,
    /// Pool windows of all series into one model; otherwise one model per
    /// series.
    pub global: bool,
    pub window_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            iterations: 1000,
            batch_size: 128,
            l1_lambda: 0.0,
            early_stop_patience: 10,
            eval_every: 100,
            seed: 0,
            loss_kind: LossKind::Mae,
            normalization: Normalization::PerSeriesMedian,
            global: true,
            window_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.window_stride == 0 {
            return Err(Error::config("batch_size, eval_every and window_stride must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return Err(Error::config(format!("l1_lambda must be non-negative, got {}", self.l1_lambda)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config("Adam betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Mean data loss (normalized units, penalty excluded) since the
    /// previous evaluation point.
    pub train_loss: f64,
    /// Validation MAE in original units.
    pub val_mae: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,val_mae\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.iteration, r.train_loss, r.val_mae));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation MAE.
    pub params: ParameterStore,
    pub history: TrainHistory,
    pub best_val_mae: f64,
    pub best_iteration: usize,
    pub iterations_run: usize,
}

fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Matrix {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        data.extend_from_slice(r);
    }
    Matrix::from_vec(n, width, data).expect("rows share the window width")
}

/// Normalized validation windows with their inverse maps.
struct ValidationSet<'a> {
    inputs: Matrix,
    inverse: Vec<Denorm>,
    raw: &'a [Window],
}

impl<'a> ValidationSet<'a> {
    fn new(windows: &'a [Window], scaler: &Scaler, input_size: usize) -> Result<Self> {
        let (norm, inverse) = scaler.normalize(windows)?;
        Ok(Self {
            inputs: stack_rows(norm.iter().map(|w| w.input.as_slice()), input_size),
            inverse,
            raw: windows,
        })
    }

    /// Mean absolute error in original units over every target point.
    fn mae(&self, model: &Model, params: &ParameterStore) -> Result<f64> {
        let pred = model.predict(params, &self.inputs)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, (w, d)) in self.raw.iter().zip(&self.inverse).enumerate() {
            for (p, y) in d.inverse(pred.row(i)).iter().zip(&w.target) {
                total += (p - y).abs();
            }
            count += w.target.len();
        }
        Ok(total / count as f64)
    }
}

fn check_windows(windows: &[Window], model: &Model, what: &str) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::data(format!("no {what} windows")));
    }
    for w in windows {
        if w.input.len() != model.input_size() || w.target.len() != model.horizon() {
            return Err(Error::Dimension {
                op: "train",
                left: (model.input_size(), model.horizon()),
                right: (w.input.len(), w.target.len()),
            });
        }
    }
    Ok(())
}

/// Mini-batch Adam on `loss_kind + l1_lambda·Σ|w|`, evaluating validation
/// MAE every `eval_every` iterations and at the last one. Returns the
/// parameters of the best evaluation.
pub fn train(
    model: &Model,
    mut params: ParameterStore,
    train_windows: &[Window],
    val_windows: &[Window],
    scaler: &Scaler,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_windows(train_windows, model, "training")?;
    check_windows(val_windows, model, "validation")?;
    let (l, h) = (model.input_size(), model.horizon());

    let (norm, _) = scaler.normalize(train_windows)?;
    let x_all = stack_rows(norm.iter().map(|w| w.input.as_slice()), l);
    let y_all = stack_rows(norm.iter().map(|w| w.target.as_slice()), h);
    drop(norm);
    let val = ValidationSet::new(val_windows, scaler, l)?;

    let adam = config.adam();
    let mut state = OptimizerState::for_params(&params);
    let mut rng = seeded(config.seed);
    let n = x_all.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ParameterStore)> = None;
    let mut stale = 0usize;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut iterations_run = 0;

    for iteration in 1..=config.iterations {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(n);
        let batch_id = cursor / config.batch_size;
        let batch = &order[cursor..end];
        cursor = end;

        let xb = stack_rows(batch.iter().map(|&i| x_all.row(i)), l);
        let yb = stack_rows(batch.iter().map(|&i| y_all.row(i)), h);

        let diverged = |e: Error| match e {
            Error::NonFinite(_) | Error::NonFiniteGradient(_) => Error::Diverged {
                iteration,
                batch: batch_id,
            },
            other => other,
        };
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let x = tape.constant(xb);
        let out = model.forward_tape(&mut tape, &vars, x).map_err(diverged)?;
        let data_loss = tape.loss(out.forecast, Arc::new(yb), config.loss_kind).map_err(diverged)?;
        let objective = if config.l1_lambda > 0.0 {
            let pen = tape.l1(&params.weight_vars(&vars), config.l1_lambda)?;
            tape.add(data_loss, pen).map_err(diverged)?
        } else {
            data_loss
        };
        loss_sum += tape.value(data_loss).get(0, 0);
        loss_count += 1;

        let mut adjoints = tape.backward(objective);
        let grads = vars.gradients(&params, &mut adjoints);
        drop(tape);
        adam_step(&mut params, &grads, &mut state, &adam).map_err(diverged)?;
        iterations_run = iteration;

        if iteration % config.eval_every == 0 || iteration == config.iterations {
            let val_mae = val.mae(model, &params).map_err(diverged)?;
            history.rows.push(HistoryRow {
                iteration,
                train_loss: loss_sum / loss_count as f64,
                val_mae,
            });
            loss_sum = 0.0;
            loss_count = 0;
            if best.as_ref().is_none_or(|(b, _, _)| val_mae < *b) {
                best = Some((val_mae, iteration, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if config.early_stop_patience > 0 && stale >= config.early_stop_patience {
                    break;
                }
            }
        }
    }

    let (best_val_mae, best_iteration, params) = best.expect("the final iteration is always evaluated");
    Ok(TrainOutcome {
        params,
        history,
        best_val_mae,
        best_iteration,
        iterations_run,
    })
}

/// Validation MAE (original units) of `params` on `windows`.
pub fn validation_mae(model: &Model, params: &ParameterStore, windows: &[Window], scaler: &Scaler) -> Result<f64> {
    check_windows(windows, model, "validation")?;
    ValidationSet::new(windows, scaler, model.input_size())?.mae(model, params)
}
