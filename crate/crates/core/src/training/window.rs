use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

/// An input/target pair cut from one series. The target immediately
/// follows the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub series_id: String,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// Index of the first input point in the source series.
    pub t_start: usize,
}

impl Window {
    /// Index of the first target point.
    pub fn target_start(&self) -> usize {
        self.t_start + self.input.len()
    }

    /// One past the last target index.
    pub fn target_end(&self) -> usize {
        self.target_start() + self.target.len()
    }
}

/// Windows starting at `0, stride, 2·stride, ...` with `t + L + H ≤ T`.
pub fn make_windows(
    series_id: &str,
    values: &[f64],
    input_size: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if stride == 0 || input_size == 0 || horizon == 0 {
        return Err(Error::config("window sizes and stride must be positive"));
    }
    let span = input_size + horizon;
    if values.len() < span {
        return Err(Error::data(format!(
            "series `{series_id}` has {} points, fewer than L + H = {span}",
            values.len()
        )));
    }
    Ok((0..=values.len() - span)
        .step_by(stride)
        .map(|t| Window {
            series_id: series_id.to_string(),
            input: values[t..t + input_size].to_vec(),
            target: values[t + input_size..t + span].to_vec(),
            t_start: t,
        })
        .collect())
}

/// Region boundaries of one series: training targets lie in
/// `[0, train_end)`, validation targets in `[train_end, val_end)` and test
/// targets in `[val_end, len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSplit {
    pub id: String,
    pub values: Vec<f64>,
    pub train_end: usize,
    pub val_end: usize,
}

impl SeriesSplit {
    pub fn train_region(&self) -> &[f64] {
        &self.values[..self.train_end]
    }

    /// Non-overlapping windows whose targets tile `[start, end)` from its
    /// beginning; inputs may reach back before `start`.
    fn holdout_windows(&self, start: usize, end: usize, input_size: usize, horizon: usize) -> Vec<Window> {
        let mut out = Vec::new();
        let mut t = start;
        while t + horizon <= end {
            if t >= input_size {
                out.push(Window {
                    series_id: self.id.clone(),
                    input: self.values[t - input_size..t].to_vec(),
                    target: self.values[t..t + horizon].to_vec(),
                    t_start: t - input_size,
                });
            }
            t += horizon;
        }
        out
    }
}

/// Tail holdout split of every series in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub series: Vec<SeriesSplit>,
    pub input_size: usize,
    pub horizon: usize,
}

/// Holds out the last `test_len` points of each series for testing and the
/// `val_len` before them for validation.
pub fn split_tail(
    dataset: &TimeSeriesDataset,
    val_len: usize,
    test_len: usize,
    input_size: usize,
    horizon: usize,
) -> Result<DataSplit> {
    let need = val_len + test_len + input_size + horizon;
    let series = dataset
        .series()
        .iter()
        .map(|s| {
            let n = s.values.len();
            if n <= need {
                return Err(Error::data(format!(
                    "series `{}` has {n} points; the split needs more than {need} \
                     (val {val_len} + test {test_len} + L {input_size} + H {horizon})",
                    s.id
                )));
            }
            Ok(SeriesSplit {
                id: s.id.clone(),
                values: s.values.clone(),
                train_end: n - val_len - test_len,
                val_end: n - test_len,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DataSplit {
        series,
        input_size,
        horizon,
    })
}

impl DataSplit {
    /// Training windows (targets entirely inside the training region).
    pub fn train_windows(&self, stride: usize) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for s in &self.series {
            out.extend(make_windows(&s.id, s.train_region(), self.input_size, self.horizon, stride)?);
        }
        Ok(out)
    }

    /// Non-overlapping windows with targets in the validation region.
    pub fn val_windows(&self) -> Vec<Window> {
        self.series
            .iter()
            .flat_map(|s| s.holdout_windows(s.train_end, s.val_end, self.input_size, self.horizon))
            .collect()
    }

    /// Non-overlapping windows with targets in the test region.
    pub fn test_windows(&self) -> Vec<Window> {
        self.series
            .iter()
            .flat_map(|s| s.holdout_windows(s.val_end, s.values.len(), self.input_size, self.horizon))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&SeriesSplit> {
        self.series.iter().find(|s| s.id == id)
    }

    /// The split restricted to one series.
    pub fn only(&self, id: &str) -> Result<DataSplit> {
        let s = self
            .get(id)
            .ok_or_else(|| Error::data(format!("no series with id `{id}`")))?;
        Ok(DataSplit {
            series: vec![s.clone()],
            input_size: self.input_size,
            horizon: self.horizon,
        })
    }
}
