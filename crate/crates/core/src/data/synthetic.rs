use serde::{Deserialize, Serialize};

use super::{Series, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::GaussianStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    /// `amplitude · sin(2πt / period + phase)`.
    Sinusoid {
        period: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `slope · t`.
    LinearTrend { slope: f64 },
    /// Independent `N(0, sigma²)` draws.
    Noise { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub id: String,
    pub length: usize,
    pub components: Vec<Component>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::config("synthetic series length must be at least 1"));
        }
        for c in &self.components {
            match c {
                Component::Sinusoid { period, .. } if !(*period >= 2.0) => {
                    return Err(Error::config(format!("sinusoid period must be ≥ 2, got {period}")))
                }
                Component::Noise { sigma } if !(*sigma >= 0.0) => {
                    return Err(Error::config(format!("noise sigma must be ≥ 0, got {sigma}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["multifreq-v1"];

/// Named synthetic benchmark signals.
///
/// `multifreq-v1`: 4000 steps of daily (24) and weekly (168) sinusoids with
/// amplitudes 10 and 5, a 0.001 per-step trend and σ = 0.5 noise, seed 1.
pub fn preset(name: &str) -> Result<SyntheticSpec> {
    match name {
        "multifreq-v1" => Ok(SyntheticSpec {
            id: "multifreq-v1".into(),
            length: 4000,
            components: vec![
                Component::Sinusoid {
                    period: 24.0,
                    amplitude: 10.0,
                    phase: 0.0,
                },
                Component::Sinusoid {
                    period: 168.0,
                    amplitude: 5.0,
                    phase: 0.0,
                },
                Component::LinearTrend { slope: 0.001 },
                Component::Noise { sigma: 0.5 },
            ],
            seed: 1,
        }),
        other => Err(Error::config(format!(
            "unknown preset `{other}`; available presets: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Evaluates the components at `t = 0..length`. Noise components draw from
/// one counter-based Gaussian stream seeded with `spec.seed`, in time-major
/// then component order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeriesDataset> {
    spec.validate()?;
    let mut noise = GaussianStream::new(spec.seed);
    let values = (0..spec.length)
        .map(|t| {
            let t = t as f64;
            spec.components
                .iter()
                .map(|c| match *c {
                    Component::Sinusoid {
                        period,
                        amplitude,
                        phase,
                    } => amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin(),
                    Component::LinearTrend { slope } => slope * t,
                    Component::Noise { sigma } => sigma * noise.next_normal(),
                })
                .sum()
        })
        .collect();
    TimeSeriesDataset::new(vec![Series {
        id: spec.id.clone(),
        values,
        start_timestamp: Some("0".into()),
        frequency: "synthetic".into(),
    }])
}
