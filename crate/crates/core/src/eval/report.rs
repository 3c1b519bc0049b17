use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub dataset: String,
    pub horizon: usize,
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
}

/// A benchmark cell that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub dataset: String,
    pub horizon: usize,
    pub model: String,
    pub error: String,
}

/// Accuracy per (dataset, horizon, model).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entries: Vec<MetricEntry>,
    pub failures: Vec<CellFailure>,
}

/// Percentage improvement of a model over a baseline; positive is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mae_pct: f64,
    pub rmse_pct: f64,
}

pub type CellKey = (String, usize, String);

impl MetricsReport {
    fn has_cell(&self, dataset: &str, horizon: usize, model: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.dataset == dataset && e.horizon == horizon && e.model == model)
            || self
                .failures
                .iter()
                .any(|e| e.dataset == dataset && e.horizon == horizon && e.model == model)
    }

    pub fn push(&mut self, entry: MetricEntry) -> Result<()> {
        if self.has_cell(&entry.dataset, entry.horizon, &entry.model) {
            return Err(Error::config(format!(
                "duplicate report cell ({}, {}, {})",
                entry.dataset, entry.horizon, entry.model
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn push_failure(&mut self, failure: CellFailure) -> Result<()> {
        if self.has_cell(&failure.dataset, failure.horizon, &failure.model) {
            return Err(Error::config(format!(
                "duplicate report cell ({}, {}, {})",
                failure.dataset, failure.horizon, failure.model
            )));
        }
        self.failures.push(failure);
        Ok(())
    }

    pub fn get(&self, dataset: &str, horizon: usize, model: &str) -> Option<&MetricEntry> {
        self.entries
            .iter()
            .find(|e| e.dataset == dataset && e.horizon == horizon && e.model == model)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// `dataset → horizon → model → {mae, rmse}`; failed cells carry
    /// `{"error": ...}` instead.
    pub fn to_json(&self) -> serde_json::Value {
        type Tree = IndexMap<String, IndexMap<String, IndexMap<String, serde_json::Value>>>;
        let mut tree: Tree = IndexMap::new();
        let mut cell = |d: &str, h: usize, m: &str, v: serde_json::Value| {
            tree.entry(d.to_string())
                .or_default()
                .entry(h.to_string())
                .or_default()
                .insert(m.to_string(), v);
        };
        for e in &self.entries {
            cell(
                &e.dataset,
                e.horizon,
                &e.model,
                serde_json::json!({"mae": e.mae, "rmse": e.rmse}),
            );
        }
        for f in &self.failures {
            cell(&f.dataset, f.horizon, &f.model, serde_json::json!({"error": f.error}));
        }
        serde_json::to_value(tree).expect("string-keyed maps serialize")
    }

    /// Inverse of [`MetricsReport::to_json`].
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let bad = || Error::data("malformed metrics JSON");
        let mut report = MetricsReport::default();
        for (dataset, horizons) in value.as_object().ok_or_else(bad)? {
            for (h, models) in horizons.as_object().ok_or_else(bad)? {
                let horizon: usize = h.parse().map_err(|_| bad())?;
                for (model, leaf) in models.as_object().ok_or_else(bad)? {
                    if let Some(err) = leaf.get("error") {
                        report.push_failure(CellFailure {
                            dataset: dataset.clone(),
                            horizon,
                            model: model.clone(),
                            error: err.as_str().unwrap_or_default().to_string(),
                        })?;
                    } else {
                        let num = |k: &str| leaf.get(k).and_then(|v| v.as_f64()).ok_or_else(bad);
                        report.push(MetricEntry {
                            dataset: dataset.clone(),
                            horizon,
                            model: model.clone(),
                            mae: num("mae")?,
                            rmse: num("rmse")?,
                        })?;
                    }
                }
            }
        }
        Ok(report)
    }

    /// `100 · (baseline − model) / baseline` for both metrics, per cell.
    pub fn relative_improvement(&self, baseline_model: &str) -> Result<IndexMap<CellKey, Improvement>> {
        let mut out = IndexMap::new();
        for e in &self.entries {
            let base = self.get(&e.dataset, e.horizon, baseline_model).ok_or_else(|| {
                Error::data(format!(
                    "baseline `{baseline_model}` missing for ({}, H={})",
                    e.dataset, e.horizon
                ))
            })?;
            let pct = |b: f64, m: f64| if b == 0.0 && m == 0.0 { 0.0 } else { 100.0 * (b - m) / b };
            out.insert(
                (e.dataset.clone(), e.horizon, e.model.clone()),
                Improvement {
                    mae_pct: pct(base.mae, e.mae),
                    rmse_pct: pct(base.rmse, e.rmse),
                },
            );
        }
        Ok(out)
    }

    /// Plain-text table: datasets and horizons as row groups, models as
    /// columns, RMSE and MAE sub-rows. The smallest value of each row is
    /// marked with `*`; failed cells show `fail`.
    pub fn render_table(&self) -> String {
        let mut models: Vec<&str> = Vec::new();
        let mut groups: Vec<(&str, usize)> = Vec::new();
        let cells = self
            .entries
            .iter()
            .map(|e| (e.dataset.as_str(), e.horizon, e.model.as_str()))
            .chain(self.failures.iter().map(|f| (f.dataset.as_str(), f.horizon, f.model.as_str())));
        for (d, h, m) in cells {
            if !models.contains(&m) {
                models.push(m);
            }
            if !groups.contains(&(d, h)) {
                groups.push((d, h));
            }
        }
        let width = models.iter().map(|m| m.len()).max().unwrap_or(0).max(12) + 2;
        let mut out = format!("{:<16}{:>6}  {:<6}", "Data", "H", "Metric");
        for m in &models {
            out.push_str(&format!("{m:>width$}"));
        }
        out.push('\n');
        for (d, h) in groups {
            for metric in ["RMSE", "MAE"] {
                let values: Vec<Option<f64>> = models
                    .iter()
                    .map(|m| {
                        self.get(d, h, m)
                            .map(|e| if metric == "MAE" { e.mae } else { e.rmse })
                    })
                    .collect();
                let best = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                out.push_str(&format!("{d:<16}{h:>6}  {metric:<6}"));
                for v in values {
                    let text = match v {
                        Some(v) if v == best => format!("{v:.4}*"),
                        Some(v) => format!("{v:.4} "),
                        None => "fail ".to_string(),
                    };
                    out.push_str(&format!("{text:>width$}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(model: &str, h: usize, mae: f64, rmse: f64) -> MetricEntry {
        MetricEntry {
            dataset: "d".into(),
            horizon: h,
            model: model.into(),
            mae,
            rmse,
        }
    }

    #[test]
    fn json_shape_and_round_trip() {
        let mut r = MetricsReport::default();
        r.push(entry("a", 24, 1.0, 2.0)).unwrap();
        r.push(entry("b", 24, 0.1 + 0.2, 1.0 / 3.0)).unwrap();
        let json = r.to_json();
        let leaves = json["d"]["24"].as_object().unwrap();
        assert_eq!(leaves.len(), 2);
        assert_eq!(MetricsReport::from_json(&json).unwrap(), r);
        assert!(r.push(entry("a", 24, 0.0, 0.0)).is_err());
    }

    #[test]
    fn improvements() {
        let mut r = MetricsReport::default();
        r.push(entry("base", 1, 4.0, 10.0)).unwrap();
        r.push(entry("m", 1, 4.0, 9.0)).unwrap();
        let imp = r.relative_improvement("base").unwrap();
        let m = imp[&("d".to_string(), 1, "m".to_string())];
        assert!((m.rmse_pct - 10.0).abs() < 1e-12);
        assert_eq!(m.mae_pct, 0.0);
        assert_eq!(imp[&("d".to_string(), 1, "base".to_string())].rmse_pct, 0.0);
        assert!(r.relative_improvement("zzz").is_err());
    }

    #[test]
    fn table_marks_row_minimum() {
        let mut r = MetricsReport::default();
        for h in [8, 16] {
            r.push(entry("alpha", h, 1.0, 3.0)).unwrap();
            r.push(entry("beta", h, 2.0, 2.0)).unwrap();
        }
        let table = r.render_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].contains("RMSE") && lines[1].contains("2.0000*") && !lines[1].contains("3.0000*"));
        assert!(lines[2].contains("MAE") && lines[2].contains("1.0000*"));
    }
}
