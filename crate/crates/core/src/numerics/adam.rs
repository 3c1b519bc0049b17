use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParameterStore};
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub first_moment: IndexMap<String, Matrix>,
    pub second_moment: IndexMap<String, Matrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn for_params(params: &ParameterStore) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.rows(), p.cols());
        Self {
            first_moment: params.iter().map(|(n, p)| (n.to_string(), zeros(&p.value))).collect(),
            second_moment: params.iter().map(|(n, p)| (n.to_string(), zeros(&p.value))).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
///
/// Entries whose gradient is exactly zero are skipped: neither the parameter
/// nor its moments move, so a zero gradient never changes a parameter.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for (name, param) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        if g.shape() != param.value.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: param.value.shape(),
                right: g.shape(),
            });
        }
        let m = state
            .first_moment
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
        let v = state
            .second_moment
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
        let entries = param
            .value
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
        for ((p, &gi), (mi, vi)) in entries {
            if gi == 0.0 {
                continue;
            }
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
