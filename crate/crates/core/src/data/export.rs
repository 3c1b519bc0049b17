use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::model::ForecastBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Writes a forecast decomposition.
///
/// CSV: header `t,forecast,component_1,...,component_K`, one row per
/// horizon step. JSON: the serialized bundle including residuals and labels.
pub fn export_decomposition(bundle: &ForecastBundle, path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Json => {
            std::fs::write(path, serde_json::to_string_pretty(bundle)?)?;
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            let mut header = vec!["t".to_string(), "forecast".to_string()];
            header.extend((1..=bundle.components.len()).map(|k| format!("component_{k}")));
            w.write_record(&header)?;
            for (t, f) in bundle.forecast.iter().enumerate() {
                let mut row = vec![t.to_string(), f.to_string()];
                row.extend(bundle.components.iter().map(|c| c[t].to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Reads a decomposition CSV back as `(forecast, components)`.
pub fn read_decomposition_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let n_components = r.headers()?.len().saturating_sub(2);
    let mut forecast = Vec::new();
    let mut components = vec![Vec::new(); n_components];
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("bad number in column {}", i + 1),
                })
        };
        forecast.push(num(1)?);
        for (k, c) in components.iter_mut().enumerate() {
            c.push(num(k + 2)?);
        }
    }
    Ok((forecast, components))
}

/// Writes a metrics report: nested JSON (`dataset → horizon → model →
/// {mae, rmse}`) or flat CSV rows.
pub fn export_metrics(report: &MetricsReport, path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&report.to_json())?;
            text.push('\n');
            std::fs::write(path, text)?;
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["dataset", "horizon", "model", "mae", "rmse"])?;
            for e in &report.entries {
                w.write_record([
                    e.dataset.clone(),
                    e.horizon.to_string(),
                    e.model.clone(),
                    e.mae.to_string(),
                    e.rmse.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
