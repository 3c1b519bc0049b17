use serde::{Deserialize, Serialize};

use super::config::{MlpConfig, ModelConfig, ModelSpec, PoolingSchedule};
use crate::error::{Error, Result};
use crate::numerics::PoolMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Dmidas,
    NbeatsG,
    NbeatsI,
    Mlp,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmidas" => Ok(Family::Dmidas),
            "nbeats-g" => Ok(Family::NbeatsG),
            "nbeats-i" => Ok(Family::NbeatsI),
            "mlp" => Ok(Family::Mlp),
            other => Err(Error::config(format!(
                "unknown model family `{other}` (expected dmidas, nbeats-g, nbeats-i or mlp)"
            ))),
        }
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Dmidas => "dmidas",
            Family::NbeatsG => "nbeats-g",
            Family::NbeatsI => "nbeats-i",
            Family::Mlp => "mlp",
        }
    }
}

/// Horizon-independent model description; [`ModelTemplate::spec`] binds it
/// to a horizon with `L = input_multiple · H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelTemplate {
    pub family: Family,
    pub input_multiple: usize,
    pub n_stacks: usize,
    pub blocks_per_stack: usize,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub base_ratio: f64,
    pub pooling_mode: PoolMode,
    /// Fixed pooling kernel for every midas block; `None` couples the kernel
    /// to the block's ratio.
    pub pooling_kernel: Option<usize>,
    pub poly_degree: usize,
    pub n_harmonics: usize,
    pub shared_weights: bool,
}

impl Default for ModelTemplate {
    fn default() -> Self {
        Self {
            family: Family::Dmidas,
            input_multiple: 3,
            n_stacks: 3,
            blocks_per_stack: 2,
            mlp_width: 256,
            mlp_depth: 2,
            base_ratio: 0.5,
            pooling_mode: PoolMode::Avg,
            pooling_kernel: None,
            poly_degree: 2,
            n_harmonics: 8,
            shared_weights: false,
        }
    }
}

impl ModelTemplate {
    pub fn with_family(family: Family) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }

    /// Display name used in reports.
    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    pub fn input_size(&self, horizon: usize) -> usize {
        self.input_multiple * horizon
    }

    pub fn spec(&self, horizon: usize) -> Result<ModelSpec> {
        if horizon == 0 || self.input_multiple == 0 {
            return Err(Error::config("horizon and input_multiple must be positive"));
        }
        let l = self.input_size(horizon);
        let widths = vec![self.mlp_width; self.mlp_depth];
        let mut cfg = match self.family {
            Family::Mlp => {
                return Ok(ModelSpec::Mlp(MlpConfig {
                    input_size: l,
                    horizon,
                    widths,
                }))
            }
            Family::Dmidas => {
                let mut c = ModelConfig::dmidas(l, horizon, self.n_stacks, self.blocks_per_stack, self.base_ratio, &widths)
                    .with_pool_mode(self.pooling_mode);
                if let Some(k) = self.pooling_kernel {
                    c.pooling_schedule = PoolingSchedule::Constant(k);
                }
                c
            }
            Family::NbeatsG => ModelConfig::nbeats_generic(l, horizon, self.n_stacks, self.blocks_per_stack, &widths),
            Family::NbeatsI => ModelConfig::nbeats_interpretable(
                l,
                horizon,
                self.blocks_per_stack,
                self.poly_degree,
                self.n_harmonics,
                &widths,
            ),
        };
        for s in &mut cfg.stacks {
            s.shared_weights = self.shared_weights;
        }
        cfg.validate()?;
        Ok(ModelSpec::Stacked(cfg))
    }
}
