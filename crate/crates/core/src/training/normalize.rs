use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::window::{DataSplit, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    /// Divide by the median absolute value of the series' training region.
    PerSeriesMedian,
    /// Subtract the last input value of each window.
    PerWindowLast,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "per-series-median" => Ok(Normalization::PerSeriesMedian),
            "per-window-last" => Ok(Normalization::PerWindowLast),
            other => Err(Error::config(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Affine map from model units back to original units:
/// `original = normalized · scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Denorm {
    pub scale: f64,
    pub offset: f64,
}

impl Denorm {
    pub const IDENTITY: Denorm = Denorm {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| (x - self.offset) / self.scale).collect()
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x * self.scale + self.offset).collect()
    }
}

/// Fitted normalization: the mode plus per-series scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mode: Normalization,
    pub scales: IndexMap<String, f64>,
}

fn median_abs(values: &[f64]) -> f64 {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    if abs.is_empty() {
        return 0.0;
    }
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    if abs.len() % 2 == 1 {
        abs[mid]
    } else {
        0.5 * (abs[mid - 1] + abs[mid])
    }
}

impl Scaler {
    /// Fits per-series scales on each series' training region only.
    pub fn fit(mode: Normalization, split: &DataSplit) -> Self {
        let scales = match mode {
            Normalization::PerSeriesMedian => split
                .series
                .iter()
                .map(|s| {
                    let m = median_abs(s.train_region());
                    (s.id.clone(), if m > 0.0 { m } else { 1.0 })
                })
                .collect(),
            _ => IndexMap::new(),
        };
        Self { mode, scales }
    }

    pub fn identity() -> Self {
        Self {
            mode: Normalization::None,
            scales: IndexMap::new(),
        }
    }

    /// Transform applying to a window of `series_id` with the given input.
    pub fn denorm_for(&self, series_id: &str, input: &[f64]) -> Result<Denorm> {
        Ok(match self.mode {
            Normalization::None => Denorm::IDENTITY,
            Normalization::PerWindowLast => Denorm {
                scale: 1.0,
                offset: *input
                    .last()
                    .ok_or_else(|| Error::data("cannot normalize an empty window"))?,
            },
            Normalization::PerSeriesMedian => Denorm {
                scale: *self.scales.get(series_id).ok_or_else(|| {
                    Error::data(format!("no fitted scale for series `{series_id}`"))
                })?,
                offset: 0.0,
            },
        })
    }

    /// Normalizes inputs and targets; returns each window's inverse map.
    pub fn normalize(&self, windows: &[Window]) -> Result<(Vec<Window>, Vec<Denorm>)> {
        let mut out = Vec::with_capacity(windows.len());
        let mut inverse = Vec::with_capacity(windows.len());
        for w in windows {
            let d = self.denorm_for(&w.series_id, &w.input)?;
            out.push(Window {
                series_id: w.series_id.clone(),
                input: d.forward(&w.input),
                target: d.forward(&w.target),
                t_start: w.t_start,
            });
            inverse.push(d);
        }
        Ok((out, inverse))
    }
}
