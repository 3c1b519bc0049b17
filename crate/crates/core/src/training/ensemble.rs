use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{train, TrainConfig, TrainHistory};
use super::normalize::Scaler;
use super::window::Window;
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::numerics::{Matrix, ParameterStore};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_members: usize,
    /// Explicit member seeds; when empty they are derived from the root seed.
    pub member_seeds: Vec<u64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_members: 4,
            member_seeds: Vec::new(),
        }
    }
}

impl EnsembleConfig {
    /// Member seeds: the explicit list, or `derive_seed(root, "member", k)`.
    pub fn seeds(&self, root: u64) -> Result<Vec<u64>> {
        if self.n_members == 0 {
            return Err(Error::config("an ensemble needs at least one member"));
        }
        if self.member_seeds.is_empty() {
            return Ok((0..self.n_members as u64).map(|k| derive_seed(root, "member", k)).collect());
        }
        if self.member_seeds.len() != self.n_members {
            return Err(Error::config(format!(
                "{} member seeds given for {} members",
                self.member_seeds.len(),
                self.n_members
            )));
        }
        for (i, s) in self.member_seeds.iter().enumerate() {
            if self.member_seeds[..i].contains(s) {
                return Err(Error::config(format!("member seed {s} appears twice")));
            }
        }
        Ok(self.member_seeds.clone())
    }
}

/// One trained model with the normalization it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub params: ParameterStore,
    pub scaler: Scaler,
    pub history: TrainHistory,
    pub best_val_mae: f64,
    pub seed: u64,
}

impl TrainedModel {
    /// Forecast in original units for one input window.
    pub fn forecast(&self, series_id: &str, y_in: &[f64]) -> Result<Vec<f64>> {
        let d = self.scaler.denorm_for(series_id, y_in)?;
        let bundle = self.model.forward(&self.params, &d.forward(y_in))?;
        Ok(d.inverse(&bundle.forecast))
    }

    /// Forecasts in original units for many windows (targets ignored).
    pub fn forecast_windows(&self, windows: &[Window]) -> Result<Vec<Vec<f64>>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let (norm, inverse) = self.scaler.normalize(windows)?;
        let rows: Vec<&[f64]> = norm.iter().map(|w| w.input.as_slice()).collect();
        let pred = self.model.predict(&self.params, &Matrix::from_rows(&rows)?)?;
        Ok(inverse.iter().enumerate().map(|(i, d)| d.inverse(pred.row(i))).collect())
    }
}

/// Builds a model from `seed` and trains it. Initialization and shuffling
/// use seeds derived from the member seed.
pub fn train_member(
    spec: &ModelSpec,
    train_windows: &[Window],
    val_windows: &[Window],
    scaler: &Scaler,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let (model, params) = Model::build(spec.clone(), derive_seed(seed, "init", 0))?;
    let member_config = TrainConfig {
        seed: derive_seed(seed, "shuffle", 0),
        ..config.clone()
    };
    let out = train(&model, params, train_windows, val_windows, scaler, &member_config)?;
    Ok(TrainedModel {
        model,
        params: out.params,
        scaler: scaler.clone(),
        history: out.history,
        best_val_mae: out.best_val_mae,
        seed,
    })
}

/// Runs `f` over `items` on a pool of `jobs` threads (1 = sequential) and
/// returns results in input order.
pub fn run_parallel<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Independently initialized members trained on the same windows. Members
/// run on up to `jobs` threads; results do not depend on `jobs`.
pub fn train_ensemble(
    spec: &ModelSpec,
    train_windows: &[Window],
    val_windows: &[Window],
    scaler: &Scaler,
    config: &TrainConfig,
    ensemble: &EnsembleConfig,
    jobs: usize,
) -> Result<Vec<TrainedModel>> {
    let seeds = ensemble.seeds(config.seed)?;
    run_parallel(&seeds, jobs, |&seed| {
        train_member(spec, train_windows, val_windows, scaler, config, seed).map_err(|e| Error::Member {
            seed,
            source: Box::new(e),
        })
    })?
    .into_iter()
    .collect()
}

/// Elementwise arithmetic mean.
pub fn mean_forecast(forecasts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::config("cannot average an empty set of forecasts"))?;
    let mut out = vec![0.0; first.len()];
    for f in forecasts {
        if f.len() != out.len() {
            return Err(Error::Dimension {
                op: "mean_forecast",
                left: (1, out.len()),
                right: (1, f.len()),
            });
        }
        for (o, v) in out.iter_mut().zip(f) {
            *o += v;
        }
    }
    let n = forecasts.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Mean of the members' forecasts in original units.
pub fn ensemble_forecast(members: &[TrainedModel], series_id: &str, y_in: &[f64]) -> Result<Vec<f64>> {
    check_members(members)?;
    let forecasts = members
        .iter()
        .map(|m| m.forecast(series_id, y_in))
        .collect::<Result<Vec<_>>>()?;
    mean_forecast(&forecasts)
}

/// Ensemble forecasts for many windows.
pub fn ensemble_forecast_windows(members: &[TrainedModel], windows: &[Window]) -> Result<Vec<Vec<f64>>> {
    check_members(members)?;
    let per_member = members
        .iter()
        .map(|m| m.forecast_windows(windows))
        .collect::<Result<Vec<_>>>()?;
    (0..windows.len())
        .map(|i| mean_forecast(&per_member.iter().map(|f| f[i].clone()).collect::<Vec<_>>()))
        .collect()
}

fn check_members(members: &[TrainedModel]) -> Result<()> {
    let first = members
        .first()
        .ok_or_else(|| Error::config("an ensemble needs at least one member"))?;
    let shape = (first.model.input_size(), first.model.horizon());
    for m in members {
        let s = (m.model.input_size(), m.model.horizon());
        if s != shape {
            return Err(Error::Dimension {
                op: "ensemble_forecast",
                left: shape,
                right: s,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MlpConfig;
    use crate::numerics::LossKind;
    use crate::training::Normalization;

    #[test]
    fn mean_forecast_examples() {
        assert_eq!(mean_forecast(&[vec![0.0, 2.0], vec![2.0, 4.0]]).unwrap(), vec![1.0, 3.0]);
        let one = vec![0.1, 0.7, -3.0];
        let three = mean_forecast(&[one.clone(), one.clone(), one.clone()]).unwrap();
        for (a, b) in three.iter().zip(&one) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
        }
        assert_eq!(mean_forecast(&[one.clone(), one.clone()]).unwrap(), one);
        assert!(mean_forecast(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(mean_forecast(&[]).is_err());
    }

    #[test]
    fn seeds() {
        let c = EnsembleConfig::default();
        let s = c.seeds(7).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s, c.seeds(7).unwrap());
        let dup = EnsembleConfig {
            n_members: 2,
            member_seeds: vec![3, 3],
        };
        assert!(dup.seeds(0).is_err());
        assert!(EnsembleConfig { n_members: 0, member_seeds: vec![] }.seeds(0).is_err());
    }

    fn windows() -> Vec<Window> {
        (0..30)
            .map(|t| {
                let v: Vec<f64> = (t..t + 6).map(|i| (i as f64 * 0.7).sin()).collect();
                Window {
                    series_id: "s".into(),
                    input: v[..4].to_vec(),
                    target: v[4..].to_vec(),
                    t_start: t,
                }
            })
            .collect()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            iterations: 20,
            batch_size: 8,
            eval_every: 10,
            loss_kind: LossKind::Mse,
            normalization: Normalization::None,
            ..TrainConfig::default()
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec::Mlp(MlpConfig {
            input_size: 4,
            horizon: 2,
            widths: vec![5],
        })
    }

    #[test]
    fn members_are_deterministic_and_parallel_safe() {
        let w = windows();
        let scaler = Scaler::identity();
        let forced = EnsembleConfig {
            n_members: 2,
            member_seeds: vec![11, 12],
        };
        let a = train_ensemble(&spec(), &w, &w, &scaler, &config(), &forced, 1).unwrap();
        let b = train_ensemble(&spec(), &w, &w, &scaler, &config(), &forced, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.params, y.params);
        }
        assert_ne!(a[0].params, a[1].params);

        let m = train_member(&spec(), &w, &w, &scaler, &config(), 11).unwrap();
        assert_eq!(m.params, a[0].params);
        let single = [m.clone()];
        assert_eq!(
            ensemble_forecast(&single, "s", &w[0].input).unwrap(),
            m.forecast("s", &w[0].input).unwrap()
        );
        let mean = ensemble_forecast(&a, "s", &w[0].input).unwrap();
        let f0 = a[0].forecast("s", &w[0].input).unwrap();
        let f1 = a[1].forecast("s", &w[0].input).unwrap();
        for t in 0..2 {
            assert_eq!(mean[t], (f0[t] + f1[t]) / 2.0);
        }
        let batched = ensemble_forecast_windows(&a, &w[..3]).unwrap();
        for (i, f) in batched.iter().enumerate() {
            let single = ensemble_forecast(&a, "s", &w[i].input).unwrap();
            for (p, q) in f.iter().zip(&single) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn member_failure_names_seed() {
        let w = windows();
        let bad = TrainConfig {
            lr: -1.0,
            ..config()
        };
        let ens = EnsembleConfig {
            n_members: 1,
            member_seeds: vec![99],
        };
        match train_ensemble(&spec(), &w, &w, &Scaler::identity(), &bad, &ens, 1) {
            Err(e @ Error::Member { seed: 99, .. }) => assert!(e.to_string().contains("99")),
            other => panic!("{other:?}"),
        }
    }
}
