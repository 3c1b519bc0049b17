//! Basis-expansion blocks.
//!
//! A block maps its residual input to a backcast (same length as the input)
//! and a forecast (horizon length): optional pooling, a ReLU MLP, two linear
//! heads producing the backcast and forecast coefficients, and a fixed basis
//! expansion of each coefficient vector.

use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    interpolation_matrix, knot_count, Matrix, ParamRole, ParamVars, ParameterStore, Pooling,
    Tape, Var,
};

/// Basis kind of a block, with its kind-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Basis {
    /// Coefficients are used directly as backcast and forecast.
    Generic,
    /// Polynomial trend of the given degree in normalized time `t / n`.
    Polynomial { degree: usize },
    /// Cosine/sine pairs at frequencies `1..=n_harmonics` of the window.
    Harmonic { n_harmonics: usize },
    /// Pooled input and `⌈ratio · n⌉` interpolated knots per output.
    Midas { ratio: f64, pooling: Pooling },
}

impl Basis {
    pub fn label(&self) -> &'static str {
        match self {
            Basis::Generic => "generic",
            Basis::Polynomial { .. } => "polynomial",
            Basis::Harmonic { .. } => "harmonic",
            Basis::Midas { .. } => "midas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub basis: Basis,
    pub input_size: usize,
    pub horizon: usize,
    pub mlp_widths: Vec<usize>,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.horizon == 0 {
            return Err(Error::config(format!(
                "block input size and horizon must be positive (got L={}, H={})",
                self.input_size, self.horizon
            )));
        }
        if self.mlp_widths.is_empty() || self.mlp_widths.contains(&0) {
            return Err(Error::config(
                "block MLP widths must be a non-empty list of positive widths",
            ));
        }
        match &self.basis {
            Basis::Generic | Basis::Polynomial { .. } => {}
            Basis::Harmonic { n_harmonics } => {
                if *n_harmonics == 0 {
                    return Err(Error::config("harmonic basis needs at least one harmonic"));
                }
            }
            Basis::Midas { ratio, pooling } => {
                if !(*ratio > 0.0 && *ratio <= 1.0) {
                    return Err(Error::config(format!(
                        "expressivity ratio must lie in (0, 1], got {ratio}"
                    )));
                }
                pooling.validate(self.input_size)?;
            }
        }
        Ok(())
    }

    /// Length of the MLP input after pooling.
    pub fn pooled_len(&self) -> usize {
        match &self.basis {
            Basis::Midas { pooling, .. } => pooling.output_len(self.input_size),
            _ => self.input_size,
        }
    }

    /// `(|θ_f|, |θ_b|)`.
    pub fn theta_sizes(&self) -> (usize, usize) {
        match &self.basis {
            Basis::Generic => (self.horizon, self.input_size),
            Basis::Polynomial { degree } => (degree + 1, degree + 1),
            Basis::Harmonic { n_harmonics } => (2 * n_harmonics, 2 * n_harmonics),
            Basis::Midas { ratio, .. } => (
                knot_count(*ratio, self.horizon),
                knot_count(*ratio, self.input_size),
            ),
        }
    }

    /// `(suffix, role, rows, cols)` of every tensor the block owns.
    pub fn parameter_shapes(&self) -> Vec<(String, ParamRole, usize, usize)> {
        let mut shapes = Vec::new();
        let mut fan_in = self.pooled_len();
        for (i, &width) in self.mlp_widths.iter().enumerate() {
            shapes.push((format!("mlp.{i}.weight"), ParamRole::Weight, fan_in, width));
            shapes.push((format!("mlp.{i}.bias"), ParamRole::Bias, 1, width));
            fan_in = width;
        }
        let (nf, nb) = self.theta_sizes();
        shapes.push(("theta_f.weight".into(), ParamRole::Weight, fan_in, nf));
        shapes.push(("theta_f.bias".into(), ParamRole::Bias, 1, nf));
        shapes.push(("theta_b.weight".into(), ParamRole::Weight, fan_in, nb));
        shapes.push(("theta_b.bias".into(), ParamRole::Bias, 1, nb));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, _, r, c)| r * c).sum()
    }
}

/// Outputs of one block for a single input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub backcast: Vec<f64>,
    pub forecast: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Tape handles of a block's intermediate values.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub hidden: Var,
    pub theta_f: Var,
    pub theta_b: Var,
    pub forecast: Var,
    pub backcast: Var,
}

/// A configured block bound to a parameter-name prefix.
#[derive(Debug, Clone)]
pub struct Block {
    config: BlockConfig,
    prefix: String,
    forecast_basis: Option<Arc<Matrix>>,
    backcast_basis: Option<Arc<Matrix>>,
}

impl Block {
    pub fn new(config: BlockConfig, prefix: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let (nf, nb) = config.theta_sizes();
        let (h, l) = (config.horizon, config.input_size);
        let (forecast_basis, backcast_basis) = match &config.basis {
            Basis::Generic => (None, None),
            Basis::Polynomial { degree } => (
                Some(polynomial_matrix(*degree, h)),
                Some(polynomial_matrix(*degree, l)),
            ),
            Basis::Harmonic { n_harmonics } => (
                Some(harmonic_matrix(*n_harmonics, h)),
                Some(harmonic_matrix(*n_harmonics, l)),
            ),
            Basis::Midas { .. } => (
                Some(interpolation_matrix(nf, h)?),
                Some(interpolation_matrix(nb, l)?),
            ),
        };
        Ok(Self {
            config,
            prefix: prefix.into(),
            forecast_basis: forecast_basis.map(Arc::new),
            backcast_basis: backcast_basis.map(Arc::new),
        })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    fn name(&self, suffix: &str) -> String {
        format!("{}.{suffix}", self.prefix)
    }

    /// Registers the block's tensors, drawn uniformly from
    /// `[−1/√fan_in, 1/√fan_in]`.
    pub fn init_params<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        // each bias follows its weight and shares that layer's fan-in
        let mut fan_in = 1;
        for (suffix, role, rows, cols) in self.config.parameter_shapes() {
            if role == ParamRole::Weight {
                fan_in = rows;
            }
            store.insert(self.name(&suffix), role, uniform_init(rows, cols, fan_in, rng))?;
        }
        Ok(())
    }

    /// Records the block on `tape` for a batch `x` of shape `N × L`.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &ParamVars, x: Var) -> Result<BlockVars> {
        let mut h = match &self.config.basis {
            Basis::Midas { pooling, .. } if *pooling != Pooling::IDENTITY => tape.pool(x, *pooling)?,
            _ => x,
        };
        for i in 0..self.config.mlp_widths.len() {
            let w = vars.get(&self.name(&format!("mlp.{i}.weight")))?;
            let b = vars.get(&self.name(&format!("mlp.{i}.bias")))?;
            let z = tape.affine(h, w, b)?;
            h = tape.relu(z)?;
        }
        let theta_f = tape.affine(
            h,
            vars.get(&self.name("theta_f.weight"))?,
            vars.get(&self.name("theta_f.bias"))?,
        )?;
        let theta_b = tape.affine(
            h,
            vars.get(&self.name("theta_b.weight"))?,
            vars.get(&self.name("theta_b.bias"))?,
        )?;
        let forecast = match &self.forecast_basis {
            Some(v) => tape.expand(theta_f, Arc::clone(v))?,
            None => theta_f,
        };
        let backcast = match &self.backcast_basis {
            Some(v) => tape.expand(theta_b, Arc::clone(v))?,
            None => theta_b,
        };
        Ok(BlockVars {
            hidden: h,
            theta_f,
            theta_b,
            forecast,
            backcast,
        })
    }

    /// Evaluates the block on a single input vector of length `L`.
    pub fn forward(&self, params: &ParameterStore, y_in: &[f64]) -> Result<BlockOutput> {
        if y_in.len() != self.config.input_size {
            return Err(Error::Dimension {
                op: "block_forward",
                left: (1, self.config.input_size),
                right: (1, y_in.len()),
            });
        }
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let x = tape.constant(Matrix::row_vector(y_in));
        let out = self.forward_tape(&mut tape, &vars, x)?;
        let row = |v: Var| tape.value(v).as_slice().to_vec();
        Ok(BlockOutput {
            backcast: row(out.backcast),
            forecast: row(out.forecast),
            theta_f: row(out.theta_f),
            theta_b: row(out.theta_b),
            hidden: row(out.hidden),
        })
    }
}

pub(crate) fn uniform_init<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data length")
}

/// `(degree + 1) × n` matrix with rows `(t / n)^p`.
pub fn polynomial_matrix(degree: usize, n: usize) -> Matrix {
    let mut m = Matrix::zeros(degree + 1, n);
    for p in 0..=degree {
        for t in 0..n {
            m.set(p, t, (t as f64 / n as f64).powi(p as i32));
        }
    }
    m
}

/// `2K × n` matrix whose rows alternate `cos(2π(k+1)t/n)` and
/// `sin(2π(k+1)t/n)` for `k = 0..K`.
pub fn harmonic_matrix(n_harmonics: usize, n: usize) -> Matrix {
    let mut m = Matrix::zeros(2 * n_harmonics, n);
    for k in 0..n_harmonics {
        for t in 0..n {
            let angle = 2.0 * std::f64::consts::PI * (k + 1) as f64 * t as f64 / n as f64;
            m.set(2 * k, t, angle.cos());
            m.set(2 * k + 1, t, angle.sin());
        }
    }
    m
}

fn expand(theta: &[f64], basis: &Matrix) -> Vec<f64> {
    Matrix::row_vector(theta)
        .matmul(basis)
        .expect("coefficient count matches basis rows")
        .into_vec()
}

/// Identity basis: coefficients are the outputs.
pub fn generic_basis(theta_f: &[f64], theta_b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (theta_f.to_vec(), theta_b.to_vec())
}

/// `out[t] = Σ_p θ[p] · (t/n)^p`.
pub fn polynomial_basis(theta: &[f64], n: usize) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(Error::config("polynomial basis needs at least one coefficient"));
    }
    Ok(expand(theta, &polynomial_matrix(theta.len() - 1, n)))
}

/// `out[t] = Σ_k θ[2k]·cos(2π(k+1)t/n) + θ[2k+1]·sin(2π(k+1)t/n)`.
pub fn harmonic_basis(theta: &[f64], n: usize) -> Result<Vec<f64>> {
    if theta.is_empty() || !theta.len().is_multiple_of(2) {
        return Err(Error::config(format!(
            "harmonic basis needs a positive even number of coefficients, got {}",
            theta.len()
        )));
    }
    Ok(expand(theta, &harmonic_matrix(theta.len() / 2, n)))
}

/// Interpolates forecast and backcast knots to lengths `horizon` and
/// `input_size`.
pub fn midas_basis(
    theta_f: &[f64],
    theta_b: &[f64],
    horizon: usize,
    input_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        crate::numerics::interp_upsample(theta_f, horizon)?,
        crate::numerics::interp_upsample(theta_b, input_size)?,
    ))
}
