use serde::{Deserialize, Serialize};

use crate::blocks::{Basis, BlockConfig};
use crate::error::{Error, Result};
use crate::numerics::{PoolMode, Pooling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub n_blocks: usize,
    pub block_template: BlockConfig,
    #[serde(default)]
    pub shared_weights: bool,
}

/// How expressivity ratios are assigned to midas blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioSchedule {
    /// `r_l = r^l` for the global block index `l = 1, 2, ...`.
    Exponential,
    /// Explicit ratio per block, in forward order.
    PerBlock(Vec<f64>),
}

/// How pooling kernels are assigned to midas blocks. Stride always equals
/// the kernel; the pooling mode comes from the block template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingSchedule {
    /// `kernel_l = max(1, ⌊1 / r_l⌋)`, capped at the input length: input
    /// resolution coarsens with the output knots.
    Coupled,
    Constant(usize),
    PerBlock(Vec<usize>),
}

/// Declarative description of a stacked (NBEATS/DMIDAS) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub horizon: usize,
    pub stacks: Vec<StackConfig>,
    pub base_ratio: f64,
    pub ratio_schedule: RatioSchedule,
    pub pooling_schedule: PoolingSchedule,
}

/// Plain multi-horizon MLP baseline mapping `L` lags to `H` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_size: usize,
    pub horizon: usize,
    /// Hidden widths; empty means a single linear layer.
    pub widths: Vec<usize>,
}

/// Any model the engine can build, train and checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Stacked(ModelConfig),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn input_size(&self) -> usize {
        match self {
            ModelSpec::Stacked(c) => c.input_size,
            ModelSpec::Mlp(c) => c.input_size,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelSpec::Stacked(c) => c.horizon,
            ModelSpec::Mlp(c) => c.horizon,
        }
    }
}

/// `[r^1, r^2, ..., r^B]`.
pub fn expressivity_schedule(r: f64, total_blocks: usize) -> Result<Vec<f64>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::config(format!(
            "base expressivity ratio must lie in (0, 1], got {r}"
        )));
    }
    Ok((1..=total_blocks).map(|l| r.powi(l as i32)).collect())
}

/// A block with its position in the model and its resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBlock {
    pub config: BlockConfig,
    pub stack: usize,
    pub index_in_stack: usize,
    /// Name prefix of the block's parameter group.
    pub group: String,
}

impl ModelConfig {
    pub fn total_blocks(&self) -> usize {
        self.stacks.iter().map(|s| s.n_blocks).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stacks.is_empty() {
            return Err(Error::config("model needs at least one stack"));
        }
        if self.input_size == 0 || self.horizon == 0 {
            return Err(Error::config("input size and horizon must be positive"));
        }
        for (i, s) in self.stacks.iter().enumerate() {
            if s.n_blocks == 0 {
                return Err(Error::config(format!("stack {i} has no blocks")));
            }
            let t = &s.block_template;
            if t.input_size != self.input_size || t.horizon != self.horizon {
                return Err(Error::config(format!(
                    "stack {i} uses L={}, H={} but the model uses L={}, H={}",
                    t.input_size, t.horizon, self.input_size, self.horizon
                )));
            }
        }
        if !(self.base_ratio > 0.0 && self.base_ratio <= 1.0) {
            return Err(Error::config(format!(
                "base expressivity ratio must lie in (0, 1], got {}",
                self.base_ratio
            )));
        }
        let b = self.total_blocks();
        if let RatioSchedule::PerBlock(r) = &self.ratio_schedule {
            if r.len() != b {
                return Err(Error::config(format!(
                    "ratio schedule lists {} ratios for {b} blocks",
                    r.len()
                )));
            }
        }
        if let PoolingSchedule::PerBlock(k) = &self.pooling_schedule {
            if k.len() != b {
                return Err(Error::config(format!(
                    "pooling schedule lists {} kernels for {b} blocks",
                    k.len()
                )));
            }
        }
        Ok(())
    }

    fn ratios(&self) -> Result<Vec<f64>> {
        match &self.ratio_schedule {
            RatioSchedule::Exponential => expressivity_schedule(self.base_ratio, self.total_blocks()),
            RatioSchedule::PerBlock(r) => Ok(r.clone()),
        }
    }

    fn kernel(&self, l: usize, ratio: f64) -> usize {
        match &self.pooling_schedule {
            // capped at the input length so deep schedules stay valid
            PoolingSchedule::Coupled => ((1.0 / ratio).floor() as usize).clamp(1, self.input_size.max(1)),
            PoolingSchedule::Constant(k) => *k,
            PoolingSchedule::PerBlock(k) => k[l],
        }
    }

    /// Per-block configurations in forward order, with schedules applied.
    pub fn resolve_blocks(&self) -> Result<Vec<ResolvedBlock>> {
        self.validate()?;
        let ratios = self.ratios()?;
        let mut blocks = Vec::with_capacity(ratios.len());
        let mut l = 0;
        for (si, stack) in self.stacks.iter().enumerate() {
            for bi in 0..stack.n_blocks {
                let mut config = stack.block_template.clone();
                if let Basis::Midas { pooling, .. } = &config.basis {
                    let mode = pooling.mode;
                    let ratio = ratios[l];
                    config.basis = Basis::Midas {
                        ratio,
                        pooling: Pooling::non_overlapping(self.kernel(l, ratio), mode),
                    };
                }
                config.validate()?;
                let group = if stack.shared_weights {
                    format!("s{si}")
                } else {
                    format!("s{si}.b{bi}")
                };
                blocks.push(ResolvedBlock {
                    config,
                    stack: si,
                    index_in_stack: bi,
                    group,
                });
                l += 1;
            }
        }
        for pair in blocks.windows(2) {
            if pair[0].group == pair[1].group && pair[0].config != pair[1].config {
                return Err(Error::config(format!(
                    "stack {} shares weights but its blocks resolve to different shapes; \
                     use a constant ratio schedule or disable sharing",
                    pair[0].stack
                )));
            }
        }
        Ok(blocks)
    }

    /// The same architecture with every midas block at full resolution and
    /// without pooling, which makes it equivalent to a generic model.
    pub fn generic_twin(&self) -> ModelConfig {
        ModelConfig {
            base_ratio: 1.0,
            ratio_schedule: RatioSchedule::Exponential,
            pooling_schedule: PoolingSchedule::Constant(1),
            ..self.clone()
        }
    }

    fn uniform(
        input_size: usize,
        horizon: usize,
        basis: Basis,
        n_stacks: usize,
        blocks_per_stack: usize,
        widths: &[usize],
    ) -> Self {
        let template = BlockConfig {
            basis,
            input_size,
            horizon,
            mlp_widths: widths.to_vec(),
        };
        ModelConfig {
            input_size,
            horizon,
            stacks: (0..n_stacks)
                .map(|_| StackConfig {
                    n_blocks: blocks_per_stack,
                    block_template: template.clone(),
                    shared_weights: false,
                })
                .collect(),
            base_ratio: 1.0,
            ratio_schedule: RatioSchedule::Exponential,
            pooling_schedule: PoolingSchedule::Coupled,
        }
    }

    /// Midas blocks with exponentially decreasing ratios and coupled
    /// average pooling.
    pub fn dmidas(
        input_size: usize,
        horizon: usize,
        n_stacks: usize,
        blocks_per_stack: usize,
        base_ratio: f64,
        widths: &[usize],
    ) -> Self {
        let basis = Basis::Midas {
            ratio: 1.0,
            pooling: Pooling::IDENTITY,
        };
        ModelConfig {
            base_ratio,
            ..Self::uniform(input_size, horizon, basis, n_stacks, blocks_per_stack, widths)
        }
    }

    /// Generic (identity-basis) blocks.
    pub fn nbeats_generic(
        input_size: usize,
        horizon: usize,
        n_stacks: usize,
        blocks_per_stack: usize,
        widths: &[usize],
    ) -> Self {
        Self::uniform(input_size, horizon, Basis::Generic, n_stacks, blocks_per_stack, widths)
    }

    /// A polynomial trend stack followed by a harmonic seasonality stack.
    pub fn nbeats_interpretable(
        input_size: usize,
        horizon: usize,
        blocks_per_stack: usize,
        poly_degree: usize,
        n_harmonics: usize,
        widths: &[usize],
    ) -> Self {
        let stack = |basis| StackConfig {
            n_blocks: blocks_per_stack,
            block_template: BlockConfig {
                basis,
                input_size,
                horizon,
                mlp_widths: widths.to_vec(),
            },
            shared_weights: false,
        };
        ModelConfig {
            input_size,
            horizon,
            stacks: vec![
                stack(Basis::Polynomial {
                    degree: poly_degree,
                }),
                stack(Basis::Harmonic { n_harmonics }),
            ],
            base_ratio: 1.0,
            ratio_schedule: RatioSchedule::Exponential,
            pooling_schedule: PoolingSchedule::Coupled,
        }
    }

    /// Sets the pooling mode of every midas template.
    pub fn with_pool_mode(mut self, mode: PoolMode) -> Self {
        for s in &mut self.stacks {
            if let Basis::Midas { pooling, .. } = &mut s.block_template.basis {
                pooling.mode = mode;
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(expressivity_schedule(0.5, 3).unwrap(), vec![0.5, 0.25, 0.125]);
        assert_eq!(expressivity_schedule(1.0, 4).unwrap(), vec![1.0; 4]);
        assert!(expressivity_schedule(0.0, 2).is_err());
        assert!(expressivity_schedule(1.2, 2).is_err());
    }

    #[test]
    fn resolved_knots_and_kernels() {
        let cfg = ModelConfig::dmidas(288, 96, 3, 1, 0.5, &[8]);
        let blocks = cfg.resolve_blocks().unwrap();
        let knots: Vec<usize> = blocks.iter().map(|b| b.config.theta_sizes().0).collect();
        assert_eq!(knots, vec![48, 24, 12]);
        let kernels: Vec<usize> = blocks
            .iter()
            .map(|b| match &b.config.basis {
                Basis::Midas { pooling, .. } => pooling.kernel,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(kernels, vec![2, 4, 8]);
    }

    #[test]
    fn inconsistent_sizes_are_config_errors() {
        let mut cfg = ModelConfig::nbeats_generic(12, 4, 2, 1, &[8]);
        cfg.stacks[1].block_template.horizon = 5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn shared_weights_need_identical_shapes() {
        let mut cfg = ModelConfig::dmidas(24, 8, 1, 2, 0.5, &[4]);
        cfg.stacks[0].shared_weights = true;
        assert!(cfg.resolve_blocks().is_err());
        cfg.ratio_schedule = RatioSchedule::PerBlock(vec![0.5, 0.5]);
        let blocks = cfg.resolve_blocks().unwrap();
        assert_eq!(blocks[0].group, blocks[1].group);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::Stacked(ModelConfig::nbeats_interpretable(12, 4, 1, 2, 2, &[8]));
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
