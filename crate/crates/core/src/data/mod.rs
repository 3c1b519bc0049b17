//! Datasets: CSV ingestion, synthetic signals and result export.

mod csv_io;
mod export;
mod synthetic;

pub use csv_io::{load_csv, write_dataset_csv, CsvSchema};
pub use export::{
    export_decomposition, export_metrics, read_decomposition_csv, ExportFormat,
};
pub use synthetic::{generate_synthetic, preset, Component, SyntheticSpec, PRESETS};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub values: Vec<f64>,
    pub start_timestamp: Option<String>,
    pub frequency: String,
}

impl Series {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            values,
            start_timestamp: None,
            frequency: "unknown".to_string(),
        }
    }
}

/// Named series with unique ids, each non-empty and finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeriesDataset {
    series: Vec<Series>,
}

impl TimeSeriesDataset {
    pub fn new(series: Vec<Series>) -> Result<Self> {
        let mut ids = IndexSet::new();
        for s in &series {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::data(format!("duplicate series id `{}`", s.id)));
            }
            if s.values.is_empty() {
                return Err(Error::data(format!("series `{}` is empty", s.id)));
            }
            if let Some(i) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "series `{}` has a non-finite value at index {i}",
                    s.id
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn get(&self, id: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Keeps only the series with the given id.
    pub fn subset(&self, id: &str) -> Result<Self> {
        let s = self
            .get(id)
            .ok_or_else(|| Error::data(format!("no series with id `{id}`")))?;
        Ok(Self {
            series: vec![s.clone()],
        })
    }
}
