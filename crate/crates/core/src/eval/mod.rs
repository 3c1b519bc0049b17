//! Accuracy metrics, baselines and the benchmark harness.

mod report;

pub use report::{CellFailure, CellKey, Improvement, MetricEntry, MetricsReport};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::model::ModelTemplate;
use crate::training::{
    ensemble_forecast_windows, run_parallel, split_tail, train_ensemble, DataSplit, EnsembleConfig,
    Scaler, TrainConfig, TrainedModel, Window,
};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            op: "metric",
            left: (1, y.len()),
            right: (1, yhat.len()),
        });
    }
    if y.is_empty() {
        return Err(Error::data("metric of empty vectors"));
    }
    Ok(())
}

/// `(1/H)·Σ|y − ŷ|`.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `√((1/H)·Σ(y − ŷ)²)`.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok((y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Repeats the last `period` inputs: `out[t] = y_in[L − period + (t mod period)]`.
pub fn seasonal_naive_forecast(y_in: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 || period > y_in.len() {
        return Err(Error::config(format!(
            "seasonal period {period} must lie in 1..={} (the input length)",
            y_in.len()
        )));
    }
    let base = y_in.len() - period;
    Ok((0..horizon).map(|t| y_in[base + t % period]).collect())
}

/// A model entered into a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Candidate {
    Neural {
        name: String,
        template: ModelTemplate,
    },
    SeasonalNaive {
        period: usize,
    },
    /// Repeats the last observed value.
    Naive,
}

impl Candidate {
    pub fn neural(template: ModelTemplate) -> Self {
        Candidate::Neural {
            name: template.name().to_string(),
            template,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Candidate::Neural { name, .. } => name.clone(),
            Candidate::SeasonalNaive { period } => format!("seasonal-naive-{period}"),
            Candidate::Naive => "naive".into(),
        }
    }

    fn input_size(&self, horizon: usize) -> usize {
        match self {
            Candidate::Neural { template, .. } => template.input_size(horizon),
            Candidate::SeasonalNaive { period } => *period,
            Candidate::Naive => 1,
        }
    }
}

/// How each benchmark cell is split, trained and scored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub val_len: usize,
    pub test_len: usize,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
}

/// MAE and RMSE of one benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub mae: f64,
    pub rmse: f64,
}

/// Per-window metrics averaged within each series, then across series.
pub fn score_windows(windows: &[Window], forecasts: &[Vec<f64>]) -> Result<CellScore> {
    if windows.is_empty() {
        return Err(Error::data("no test windows to score"));
    }
    if windows.len() != forecasts.len() {
        return Err(Error::Dimension {
            op: "score_windows",
            left: (windows.len(), 1),
            right: (forecasts.len(), 1),
        });
    }
    let mut per_series: IndexMap<&str, (f64, f64, usize)> = IndexMap::new();
    for (w, f) in windows.iter().zip(forecasts) {
        let e = per_series.entry(w.series_id.as_str()).or_default();
        e.0 += mae(&w.target, f)?;
        e.1 += rmse(&w.target, f)?;
        e.2 += 1;
    }
    let n = per_series.len() as f64;
    let (m, r) = per_series
        .values()
        .fold((0.0, 0.0), |(m, r), (sm, sr, k)| (m + sm / *k as f64, r + sr / *k as f64));
    Ok(CellScore { mae: m / n, rmse: r / n })
}

/// Forecasts of a non-neural candidate.
fn baseline_forecasts(candidate: &Candidate, windows: &[Window], horizon: usize) -> Result<Vec<Vec<f64>>> {
    windows
        .iter()
        .map(|w| match candidate {
            Candidate::SeasonalNaive { period } => seasonal_naive_forecast(&w.input, horizon, *period),
            Candidate::Naive => seasonal_naive_forecast(&w.input, horizon, 1),
            Candidate::Neural { .. } => unreachable!("neural candidates are trained"),
        })
        .collect()
}

/// Trains an ensemble per protocol: one global ensemble, or one per series.
/// Returns `(series ids served, members)` groups.
pub fn train_protocol(
    template: &ModelTemplate,
    split: &DataSplit,
    protocol: &Protocol,
    jobs: usize,
) -> Result<Vec<(Vec<String>, Vec<TrainedModel>)>> {
    let spec = template.spec(split.horizon)?;
    let groups: Vec<DataSplit> = if protocol.train.global {
        vec![split.clone()]
    } else {
        split.series.iter().map(|s| split.only(&s.id)).collect::<Result<_>>()?
    };
    groups
        .iter()
        .map(|g| {
            let scaler = Scaler::fit(protocol.train.normalization, g);
            let train_w = g.train_windows(protocol.train.window_stride)?;
            let val_w = g.val_windows();
            let members = train_ensemble(&spec, &train_w, &val_w, &scaler, &protocol.train, &protocol.ensemble, jobs)?;
            Ok((g.series.iter().map(|s| s.id.clone()).collect(), members))
        })
        .collect()
}

/// Ensemble forecasts for `windows`, routing each window to the group that
/// serves its series.
pub fn grouped_forecasts(
    groups: &[(Vec<String>, Vec<TrainedModel>)],
    windows: &[Window],
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); windows.len()];
    for (ids, members) in groups {
        let idx: Vec<usize> = (0..windows.len())
            .filter(|&i| ids.contains(&windows[i].series_id))
            .collect();
        let sub: Vec<Window> = idx.iter().map(|&i| windows[i].clone()).collect();
        for (i, f) in idx.into_iter().zip(ensemble_forecast_windows(members, &sub)?) {
            out[i] = f;
        }
    }
    if let Some(i) = out.iter().position(|f| f.is_empty()) {
        return Err(Error::data(format!("no trained model serves series `{}`", windows[i].series_id)));
    }
    Ok(out)
}

fn run_cell(
    dataset: &TimeSeriesDataset,
    candidate: &Candidate,
    horizon: usize,
    protocol: &Protocol,
    jobs: usize,
) -> Result<CellScore> {
    let l = candidate.input_size(horizon);
    let split = split_tail(dataset, protocol.val_len, protocol.test_len, l, horizon)?;
    let test = split.test_windows();
    let forecasts = match candidate {
        Candidate::Neural { template, .. } => {
            let groups = train_protocol(template, &split, protocol, jobs)?;
            grouped_forecasts(&groups, &test)?
        }
        other => baseline_forecasts(other, &test, horizon)?,
    };
    score_windows(&test, &forecasts)
}

/// Trains and scores every (candidate, horizon) cell. Cell failures are
/// recorded in the report and do not stop the run. Cells run on up to
/// `jobs` threads without affecting results.
pub fn run_benchmark(
    dataset_name: &str,
    dataset: &TimeSeriesDataset,
    candidates: &[Candidate],
    horizons: &[usize],
    protocol: &Protocol,
    jobs: usize,
) -> Result<MetricsReport> {
    if candidates.is_empty() || horizons.is_empty() {
        return Err(Error::config("a benchmark needs at least one model and one horizon"));
    }
    let cells: Vec<(usize, &Candidate)> = horizons
        .iter()
        .flat_map(|&h| candidates.iter().map(move |c| (h, c)))
        .collect();
    let scores = run_parallel(&cells, jobs, |&(h, c)| run_cell(dataset, c, h, protocol, 1))?;
    let mut report = MetricsReport::default();
    for ((h, c), score) in cells.into_iter().zip(scores) {
        match score {
            Ok(s) => report.push(MetricEntry {
                dataset: dataset_name.to_string(),
                horizon: h,
                model: c.name(),
                mae: s.mae,
                rmse: s.rmse,
            })?,
            Err(e) => report.push_failure(CellFailure {
                dataset: dataset_name.to_string(),
                horizon: h,
                model: c.name(),
                error: e.to_string(),
            })?,
        }
    }
    Ok(report)
}

/// `100·(baseline − model)/baseline` per cell and metric.
pub fn relative_improvement(report: &MetricsReport, baseline_model: &str) -> Result<IndexMap<CellKey, Improvement>> {
    report.relative_improvement(baseline_model)
}
