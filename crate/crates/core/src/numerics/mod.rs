//! Dense matrix arithmetic with reverse-mode gradients, resampling
//! primitives, losses, penalties and the optimizer.

mod adam;
mod gradcheck;
mod matrix;
mod params;
mod resample;
mod tape;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use matrix::Matrix;
pub use params::{l1_penalty, ParamRole, ParamVars, Parameter, ParameterStore, Gradients};
pub use resample::{interp_upsample, interpolation_matrix, knot_count, pool1d, PoolMode, Pooling};
pub use tape::{Adjoints, BackwardFn, LossKind, Tape, Var};

use crate::error::{Error, Result};

/// Mean absolute (`Mae`) or mean squared (`Mse`) error between equally long
/// vectors.
pub fn loss(y: &[f64], yhat: &[f64], kind: LossKind) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            op: "loss",
            left: (1, y.len()),
            right: (1, yhat.len()),
        });
    }
    if y.is_empty() {
        return Err(Error::config("loss over empty vectors"));
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| match kind {
            LossKind::Mae => (a - b).abs(),
            LossKind::Mse => (a - b) * (a - b),
        })
        .sum();
    Ok(total / y.len() as f64)
}
