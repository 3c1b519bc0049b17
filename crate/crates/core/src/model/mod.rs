//! Doubly residual stacking of blocks, forecast decomposition, parameter
//! accounting and checkpoints.

mod checkpoint;
mod config;
mod template;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{
    expressivity_schedule, MlpConfig, ModelConfig, ModelSpec, PoolingSchedule, RatioSchedule,
    ResolvedBlock, StackConfig,
};
pub use template::{Family, ModelTemplate};

use serde::{Deserialize, Serialize};

use crate::blocks::{uniform_init, Basis, Block};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamRole, ParamVars, ParameterStore, Tape, Var};
use crate::rng::seeded;

/// Final forecast plus its additive per-block decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub forecast: Vec<f64>,
    /// One forecast component per block, in stacking order.
    pub components: Vec<Vec<f64>>,
    /// The input followed by the residual left after each block.
    pub residual_trace: Vec<Vec<f64>>,
    pub block_labels: Vec<String>,
}

/// Tape handles produced by [`Model::forward_tape`].
#[derive(Debug, Clone)]
pub struct TapeForward {
    pub forecast: Var,
    pub components: Vec<Var>,
    pub residuals: Vec<Var>,
}

#[derive(Debug, Clone)]
enum Arch {
    Stacked(Vec<(Block, String)>),
    Mlp(MlpConfig),
}

/// A built model: resolved architecture without parameter values.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    arch: Arch,
}

fn block_label(l: usize, basis: &Basis) -> String {
    match basis {
        Basis::Midas { ratio, pooling } => {
            format!("block{} midas r={ratio} k={}", l + 1, pooling.kernel)
        }
        other => format!("block{} {}", l + 1, other.label()),
    }
}

impl Model {
    /// Resolves `spec` into a model without allocating parameters.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let arch = match &spec {
            ModelSpec::Stacked(cfg) => Arch::Stacked(
                cfg.resolve_blocks()?
                    .into_iter()
                    .enumerate()
                    .map(|(l, rb)| {
                        let label = block_label(l, &rb.config.basis);
                        Ok((Block::new(rb.config, rb.group)?, label))
                    })
                    .collect::<Result<_>>()?,
            ),
            ModelSpec::Mlp(cfg) => {
                if cfg.input_size == 0 || cfg.horizon == 0 || cfg.widths.contains(&0) {
                    return Err(Error::config("MLP sizes must be positive"));
                }
                Arch::Mlp(cfg.clone())
            }
        };
        Ok(Self { spec, arch })
    }

    /// Resolves `spec` and initializes parameters deterministically from
    /// `seed`.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<(Self, ParameterStore)> {
        let model = Self::new(spec)?;
        let mut rng = seeded(seed);
        let mut store = ParameterStore::new();
        match &model.arch {
            Arch::Stacked(blocks) => {
                for (block, _) in blocks {
                    // shared groups are initialized once
                    if !store.contains(&format!("{}.theta_f.weight", block.prefix())) {
                        block.init_params(&mut store, &mut rng)?;
                    }
                }
            }
            Arch::Mlp(cfg) => {
                for (name, role, rows, cols, fan_in) in mlp_shapes(cfg) {
                    store.insert(name, role, uniform_init(rows, cols, fan_in, &mut rng))?;
                }
            }
        }
        Ok((model, store))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_size()
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        let blocks: &[(Block, String)] = match &self.arch {
            Arch::Stacked(b) => b,
            Arch::Mlp(_) => &[],
        };
        blocks.iter().map(|(b, _)| b)
    }

    pub fn block_labels(&self) -> Vec<String> {
        match &self.arch {
            Arch::Stacked(b) => b.iter().map(|(_, l)| l.clone()).collect(),
            Arch::Mlp(_) => vec!["mlp".to_string()],
        }
    }

    /// Records the model on `tape` for a batch `x` of shape `N × L`.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &ParamVars, x: Var) -> Result<TapeForward> {
        match &self.arch {
            Arch::Stacked(blocks) => {
                let mut residual = x;
                let mut residuals = vec![x];
                let mut components = Vec::with_capacity(blocks.len());
                let mut forecast: Option<Var> = None;
                for (block, _) in blocks {
                    let out = block.forward_tape(tape, vars, residual)?;
                    residual = tape.sub(residual, out.backcast)?;
                    residuals.push(residual);
                    components.push(out.forecast);
                    forecast = Some(match forecast {
                        None => out.forecast,
                        Some(acc) => tape.add(acc, out.forecast)?,
                    });
                }
                Ok(TapeForward {
                    forecast: forecast.expect("validated models have at least one block"),
                    components,
                    residuals,
                })
            }
            Arch::Mlp(cfg) => {
                let mut h = x;
                for i in 0..cfg.widths.len() {
                    let w = vars.get(&format!("mlp.{i}.weight"))?;
                    let b = vars.get(&format!("mlp.{i}.bias"))?;
                    let z = tape.affine(h, w, b)?;
                    h = tape.relu(z)?;
                }
                let out = tape.affine(h, vars.get("mlp.out.weight")?, vars.get("mlp.out.bias")?)?;
                Ok(TapeForward {
                    forecast: out,
                    components: vec![out],
                    residuals: vec![x],
                })
            }
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_size() {
            return Err(Error::Dimension {
                op: "forward",
                left: (1, self.input_size()),
                right: (1, len),
            });
        }
        Ok(())
    }

    /// Forecast and decomposition for one input window.
    pub fn forward(&self, params: &ParameterStore, y_in: &[f64]) -> Result<ForecastBundle> {
        self.check_input(y_in.len())?;
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let x = tape.constant(Matrix::row_vector(y_in));
        let out = self.forward_tape(&mut tape, &vars, x)?;
        let row = |v: &Var| tape.value(*v).as_slice().to_vec();
        Ok(ForecastBundle {
            forecast: row(&out.forecast),
            components: out.components.iter().map(row).collect(),
            residual_trace: out.residuals.iter().map(row).collect(),
            block_labels: self.block_labels(),
        })
    }

    /// Same as [`Model::forward`]; labels carry each block's basis and ratio.
    pub fn decompose(&self, params: &ParameterStore, y_in: &[f64]) -> Result<ForecastBundle> {
        self.forward(params, y_in)
    }

    /// Forecasts for a batch of inputs stacked as rows.
    pub fn predict(&self, params: &ParameterStore, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs.cols())?;
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let x = tape.constant(inputs.clone());
        let out = self.forward_tape(&mut tape, &vars, x)?;
        Ok(tape.value(out.forecast).clone())
    }

    /// Exact parameter counts derived from the architecture.
    pub fn count_parameters(&self) -> ParameterBreakdown {
        let mut layers = Vec::new();
        let mut theta_forecast_total = 0;
        let mut theta_backcast_total = 0;
        let mut theta_layer_params = 0;
        let mut geometric_bound = None;
        match &self.arch {
            Arch::Stacked(blocks) => {
                let mut seen = std::collections::HashSet::new();
                for (block, _) in blocks {
                    let (nf, nb) = block.config().theta_sizes();
                    theta_forecast_total += nf;
                    theta_backcast_total += nb;
                    if !seen.insert(block.prefix().to_string()) {
                        continue;
                    }
                    for (suffix, _, rows, cols) in block.config().parameter_shapes() {
                        let count = rows * cols;
                        if suffix.starts_with("theta_") {
                            theta_layer_params += count;
                        }
                        layers.push(LayerCount {
                            name: format!("{}.{suffix}", block.prefix()),
                            count,
                        });
                    }
                }
                if let ModelSpec::Stacked(cfg) = &self.spec {
                    if cfg.ratio_schedule == RatioSchedule::Exponential {
                        let h = cfg.horizon as f64;
                        let r = cfg.base_ratio;
                        let b = blocks.len() as i32;
                        geometric_bound = Some(if r == 1.0 {
                            h * b as f64
                        } else {
                            h * r * (1.0 - r.powi(b)) / (1.0 - r)
                        });
                    }
                }
            }
            Arch::Mlp(cfg) => {
                for (name, _, rows, cols, _) in mlp_shapes(cfg) {
                    layers.push(LayerCount {
                        name,
                        count: rows * cols,
                    });
                }
                theta_forecast_total = cfg.horizon;
            }
        }
        ParameterBreakdown {
            total: layers.iter().map(|l| l.count).sum(),
            layers,
            theta_forecast_total,
            theta_backcast_total,
            theta_layer_params,
            geometric_bound,
        }
    }
}

/// `(name, role, rows, cols, fan_in)` of the MLP baseline's tensors.
fn mlp_shapes(cfg: &MlpConfig) -> Vec<(String, ParamRole, usize, usize, usize)> {
    let mut shapes = Vec::new();
    let mut fan_in = cfg.input_size;
    for (i, &w) in cfg.widths.iter().enumerate() {
        shapes.push((format!("mlp.{i}.weight"), ParamRole::Weight, fan_in, w, fan_in));
        shapes.push((format!("mlp.{i}.bias"), ParamRole::Bias, 1, w, fan_in));
        fan_in = w;
    }
    shapes.push(("mlp.out.weight".into(), ParamRole::Weight, fan_in, cfg.horizon, fan_in));
    shapes.push(("mlp.out.bias".into(), ParamRole::Bias, 1, cfg.horizon, fan_in));
    shapes
}

/// Plain MLP forecaster, wrapped as a [`Model`].
pub fn build_mlp_baseline(
    input_size: usize,
    horizon: usize,
    widths: &[usize],
    seed: u64,
) -> Result<(Model, ParameterStore)> {
    Model::build(
        ModelSpec::Mlp(MlpConfig {
            input_size,
            horizon,
            widths: widths.to_vec(),
        }),
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCount {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBreakdown {
    pub layers: Vec<LayerCount>,
    /// `Σ_l |θ_f,l|`: forecast coefficients (knots) across blocks.
    pub theta_forecast_total: usize,
    pub theta_backcast_total: usize,
    /// Weights and biases of the coefficient heads.
    pub theta_layer_params: usize,
    pub total: usize,
    /// `H·r(1 − r^B)/(1 − r)` (or `H·B` at `r = 1`) for exponential
    /// schedules.
    pub geometric_bound: Option<f64>,
}

impl std::fmt::Display for ParameterBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for layer in &self.layers {
            writeln!(f, "  {:<28} {:>10}", layer.name, layer.count)?;
        }
        writeln!(f, "  forecast knots total         {:>10}", self.theta_forecast_total)?;
        writeln!(f, "  backcast knots total         {:>10}", self.theta_backcast_total)?;
        writeln!(f, "  coefficient-head parameters  {:>10}", self.theta_layer_params)?;
        if let Some(g) = self.geometric_bound {
            writeln!(f, "  geometric closed form        {:>10.4}", g)?;
        }
        write!(f, "  total parameters             {:>10}", self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_is_deterministic() {
        let spec = ModelSpec::Stacked(ModelConfig::dmidas(24, 8, 2, 1, 0.5, &[6]));
        let (_, a) = Model::build(spec.clone(), 5).unwrap();
        let (_, b) = Model::build(spec.clone(), 5).unwrap();
        let (_, c) = Model::build(spec, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn three_single_block_stacks_make_three_groups() {
        let spec = ModelSpec::Stacked(ModelConfig::nbeats_generic(12, 4, 3, 1, &[5]));
        let (_, store) = Model::build(spec, 0).unwrap();
        let prefixes: std::collections::BTreeSet<String> = store
            .iter()
            .map(|(n, _)| n.split('.').take(2).collect::<Vec<_>>().join("."))
            .collect();
        assert_eq!(prefixes.len(), 3);
    }

    #[test]
    fn zero_parameters_give_zero_forecast_and_unchanged_residuals() {
        let spec = ModelSpec::Stacked(ModelConfig::dmidas(24, 8, 3, 1, 0.5, &[6]));
        let (model, mut store) = Model::build(spec, 1).unwrap();
        store.fill(0.0);
        let y: Vec<f64> = (0..24).map(|t| t as f64).collect();
        let bundle = model.forward(&store, &y).unwrap();
        assert_eq!(bundle.forecast, vec![0.0; 8]);
        assert_eq!(bundle.residual_trace.len(), 4);
        assert!(bundle.residual_trace.iter().all(|r| *r == y));
    }

    #[test]
    fn single_block_forecast_is_its_component() {
        let spec = ModelSpec::Stacked(ModelConfig::nbeats_generic(12, 4, 1, 1, &[5]));
        let (model, store) = Model::build(spec, 2).unwrap();
        let bundle = model.forward(&store, &[0.5; 12]).unwrap();
        assert_eq!(bundle.components.len(), 1);
        assert_eq!(bundle.forecast, bundle.components[0]);
    }

    #[test]
    fn mlp_baseline_examples() {
        let (model, mut store) = build_mlp_baseline(6, 3, &[4], 0).unwrap();
        store.fill(0.0);
        assert_eq!(model.forward(&store, &[1.0; 6]).unwrap().forecast, vec![0.0; 3]);

        let (copy, mut store) = build_mlp_baseline(4, 4, &[], 0).unwrap();
        store.get_mut("mlp.out.weight").unwrap().value = Matrix::identity(4);
        store.get_mut("mlp.out.bias").unwrap().value = Matrix::zeros(1, 4);
        let y = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(copy.forward(&store, &y).unwrap().forecast, y.to_vec());

        // (6·4 + 4) + (4·3 + 3)
        assert_eq!(model.count_parameters().total, 43);
    }

    #[test]
    fn knot_totals_for_the_reference_comparison() {
        let cfg = ModelConfig::dmidas(288, 96, 3, 1, 0.5, &[16]);
        let dmidas = Model::new(ModelSpec::Stacked(cfg.clone())).unwrap().count_parameters();
        let twin = Model::new(ModelSpec::Stacked(cfg.generic_twin()))
            .unwrap()
            .count_parameters();
        assert_eq!(dmidas.theta_forecast_total, 84);
        assert_eq!(twin.theta_forecast_total, 288);
        assert_eq!(dmidas.geometric_bound, Some(84.0));
        assert_eq!(twin.geometric_bound, Some(288.0));
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let spec = ModelSpec::Stacked(ModelConfig::nbeats_generic(12, 4, 1, 1, &[5]));
        let (model, store) = Model::build(spec, 2).unwrap();
        assert!(model.forward(&store, &[0.0; 11]).is_err());
    }
}
