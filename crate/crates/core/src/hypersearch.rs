//! Seeded random search over a declared hyperparameter space, selecting by
//! validation MAE.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ModelTemplate;
use crate::rng::{derive_seed, seeded};
use crate::training::{run_parallel, TrainConfig};

/// One axis of a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dimension {
    Choice { values: Vec<Value> },
    /// `exp(uniform(ln lo, ln hi))`.
    LogUniform { lo: f64, hi: f64 },
    /// Uniform over the integers `lo..=hi`.
    IntRange { lo: i64, hi: i64 },
    /// Picks one component uniformly, then samples it.
    Mixture { components: Vec<Dimension> },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("search dimension `{name}`: {msg}")));
        match self {
            Dimension::Choice { values } if values.is_empty() => bad("empty choice list".into()),
            Dimension::LogUniform { lo, hi } if !(*lo > 0.0 && lo < hi && hi.is_finite()) => {
                bad(format!("loguniform needs 0 < lo < hi, got ({lo}, {hi})"))
            }
            Dimension::IntRange { lo, hi } if lo >= hi => bad(format!("int_range needs lo < hi, got ({lo}, {hi})")),
            Dimension::Mixture { components } => {
                if components.is_empty() {
                    return bad("empty mixture".into());
                }
                components.iter().try_for_each(|c| c.validate(name))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Value {
        match self {
            Dimension::Choice { values } => values[rng.gen_range(0..values.len())].clone(),
            Dimension::LogUniform { lo, hi } => Value::from(rng.gen_range(lo.ln()..hi.ln()).exp()),
            Dimension::IntRange { lo, hi } => Value::from(rng.gen_range(*lo..=*hi)),
            Dimension::Mixture { components } => components[rng.gen_range(0..components.len())].sample(rng),
        }
    }

    /// Central value: middle choice, middle integer, geometric mean, or the
    /// first mixture component's midpoint.
    fn midpoint(&self) -> Value {
        match self {
            Dimension::Choice { values } => values[(values.len() - 1) / 2].clone(),
            Dimension::LogUniform { lo, hi } => Value::from((lo * hi).sqrt()),
            Dimension::IntRange { lo, hi } => Value::from(lo + (hi - lo) / 2),
            Dimension::Mixture { components } => components[0].midpoint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDimension {
    pub name: String,
    #[serde(flatten)]
    pub dimension: Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub dimensions: Vec<NamedDimension>,
}

/// A sampled point: dimension name → value.
pub type Assignment = IndexMap<String, Value>;

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::config("search space has no dimensions"));
        }
        for (i, d) in self.dimensions.iter().enumerate() {
            if self.dimensions[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::config(format!("search dimension `{}` declared twice", d.name)));
            }
            d.dimension.validate(&d.name)?;
        }
        Ok(())
    }

    /// The built-in space over learning rate, base ratio, MLP width, blocks
    /// per stack and L1 strength.
    pub fn default_space() -> Self {
        let dim = |name: &str, dimension| NamedDimension {
            name: name.into(),
            dimension,
        };
        let choice = |v: Vec<Value>| Dimension::Choice { values: v };
        SearchSpace {
            dimensions: vec![
                dim("lr", Dimension::LogUniform { lo: 1e-4, hi: 1e-2 }),
                dim("base_ratio", choice(vec![0.25.into(), 0.5.into(), 0.75.into()])),
                dim("mlp_width", choice(vec![128.into(), 256.into(), 512.into()])),
                dim("blocks_per_stack", Dimension::IntRange { lo: 1, hi: 3 }),
                dim(
                    "l1_lambda",
                    Dimension::Mixture {
                        components: vec![choice(vec![0.0.into()]), Dimension::LogUniform { lo: 1e-6, hi: 1e-2 }],
                    },
                ),
            ],
        }
    }

    pub fn midpoint(&self) -> Assignment {
        self.dimensions
            .iter()
            .map(|d| (d.name.clone(), d.dimension.midpoint()))
            .collect()
    }
}

/// One independent draw per dimension, in declaration order.
pub fn sample_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> Assignment {
    space
        .dimensions
        .iter()
        .map(|d| (d.name.clone(), d.dimension.sample(rng)))
        .collect()
}

fn as_f64(name: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::config(format!("`{name}` must be a number, got {v}")))
}

fn as_usize(name: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
        .map(|u| u as usize)
        .ok_or_else(|| Error::config(format!("`{name}` must be a non-negative integer, got {v}")))
}

/// Writes an assignment into a model template and training config.
pub fn apply_assignment(assignment: &Assignment, template: &mut ModelTemplate, train: &mut TrainConfig) -> Result<()> {
    for (name, v) in assignment {
        match name.as_str() {
            "lr" => train.lr = as_f64(name, v)?,
            "l1_lambda" => train.l1_lambda = as_f64(name, v)?,
            "batch_size" => train.batch_size = as_usize(name, v)?,
            "iterations" => train.iterations = as_usize(name, v)?,
            "base_ratio" => template.base_ratio = as_f64(name, v)?,
            "mlp_width" => template.mlp_width = as_usize(name, v)?,
            "mlp_depth" => template.mlp_depth = as_usize(name, v)?,
            "n_stacks" => template.n_stacks = as_usize(name, v)?,
            "blocks_per_stack" => template.blocks_per_stack = as_usize(name, v)?,
            "input_multiple" => template.input_multiple = as_usize(name, v)?,
            "family" => {
                template.family = v
                    .as_str()
                    .ok_or_else(|| Error::config("`family` must be a string"))?
                    .parse()?
            }
            other => return Err(Error::config(format!("unknown search dimension `{other}`"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Assignment,
    /// `None` for failed trials.
    pub validation_mae: Option<f64>,
    pub seed: u64,
    #[serde(flatten)]
    pub status: TrialStatus,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// Evaluates `budget` sampled configurations and keeps the one with the
/// smallest validation MAE (ties go to the earliest trial). The objective
/// receives the assignment and a per-trial seed. Configurations are drawn
/// before any evaluation, so results do not depend on `jobs`.
pub fn random_search<F>(space: &SearchSpace, budget: usize, objective: F, seed: u64, jobs: usize) -> Result<SearchResult>
where
    F: Fn(&Assignment, u64) -> Result<f64> + Sync + Send,
{
    if budget == 0 {
        return Err(Error::config("search budget must be at least 1"));
    }
    space.validate()?;
    let mut rng = seeded(derive_seed(seed, "search", 0));
    // trial seeds are kept to 63 bits so they fit signed config integers
    let plans: Vec<(usize, Assignment, u64)> = (0..budget)
        .map(|i| (i, sample_config(space, &mut rng), derive_seed(seed, "trial", i as u64) >> 1))
        .collect();
    let trials = run_parallel(&plans, jobs, |(index, config, trial_seed)| {
        let start = Instant::now();
        let outcome = objective(config, *trial_seed).and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Search(format!("objective returned {v}")))
            }
        });
        let wall_time_secs = start.elapsed().as_secs_f64();
        let (validation_mae, status) = match outcome {
            Ok(v) => (Some(v), TrialStatus::Completed),
            Err(e) => (None, TrialStatus::Failed { error: e.to_string() }),
        };
        Trial {
            index: *index,
            config: config.clone(),
            validation_mae,
            seed: *trial_seed,
            status,
            wall_time_secs,
        }
    })?;
    let best = trials
        .iter()
        .filter_map(|t| t.validation_mae.map(|v| (v, t)))
        .fold(None::<(f64, &Trial)>, |acc, (v, t)| match acc {
            Some((b, _)) if b <= v => acc,
            _ => Some((v, t)),
        })
        .map(|(_, t)| t.clone())
        .ok_or_else(|| Error::Search(format!("all {budget} trials failed")))?;
    Ok(SearchResult { best, trials })
}

/// Writes one JSON object per trial, in trial order.
pub fn write_trial_log(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, dimension: Dimension) -> SearchSpace {
        SearchSpace {
            dimensions: vec![NamedDimension {
                name: name.into(),
                dimension,
            }],
        }
    }

    #[test]
    fn single_choice_is_constant() {
        let s = one("a", Dimension::Choice { values: vec!["x".into()] });
        let mut rng = seeded(1);
        for _ in 0..20 {
            assert_eq!(sample_config(&s, &mut rng)["a"], Value::from("x"));
        }
    }

    #[test]
    fn int_range_covers_all_values() {
        let s = one("k", Dimension::IntRange { lo: 1, hi: 4 });
        let mut rng = seeded(5);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[sample_config(&s, &mut rng)["k"].as_i64().unwrap() as usize - 1] += 1;
        }
        assert!(counts.iter().all(|&c| c > 2000 && c < 3000), "{counts:?}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = SearchSpace::default_space();
        let a: Vec<_> = {
            let mut r = seeded(9);
            (0..5).map(|_| sample_config(&s, &mut r)).collect()
        };
        let mut r = seeded(9);
        let b: Vec<_> = (0..5).map(|_| sample_config(&s, &mut r)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        assert!(one("a", Dimension::LogUniform { lo: 1.0, hi: 1.0 }).validate().is_err());
        assert!(one("a", Dimension::LogUniform { lo: 0.0, hi: 1.0 }).validate().is_err());
        assert!(one("a", Dimension::IntRange { lo: 2, hi: 1 }).validate().is_err());
        assert!(one("a", Dimension::Choice { values: vec![] }).validate().is_err());
        let mut dup = SearchSpace::default_space();
        dup.dimensions.push(dup.dimensions[0].clone());
        assert!(dup.validate().is_err());
        SearchSpace::default_space().validate().unwrap();
    }

    #[test]
    fn default_midpoint() {
        let m = SearchSpace::default_space().midpoint();
        assert!((m["lr"].as_f64().unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(m["base_ratio"], Value::from(0.5));
        assert_eq!(m["mlp_width"], Value::from(256));
        assert_eq!(m["blocks_per_stack"], Value::from(2));
        assert_eq!(m["l1_lambda"], Value::from(0.0));
        let mut t = ModelTemplate::default();
        let mut c = TrainConfig::default();
        apply_assignment(&m, &mut t, &mut c).unwrap();
        assert_eq!(t.mlp_width, 256);
        assert_eq!(t.blocks_per_stack, 2);
        let mut bad = m.clone();
        bad.insert("nope".into(), 1.into());
        assert!(apply_assignment(&bad, &mut t, &mut c).is_err());
    }

    #[test]
    fn convex_objective_finds_minimizer_decade() {
        let s = one("x", Dimension::LogUniform { lo: 1e-6, hi: 1.0 });
        let f = |a: &Assignment, _| -> Result<f64> { Ok((a["x"].as_f64().unwrap().log10() + 3.0).powi(2)) };
        let r = random_search(&s, 50, f, 3, 1).unwrap();
        let x = r.best.config["x"].as_f64().unwrap();
        assert!((1e-4..1e-2).contains(&x), "{x}");
        let min = r.trials.iter().filter_map(|t| t.validation_mae).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best.validation_mae, Some(min));
        assert_eq!(r.trials.len(), 50);
    }

    #[test]
    fn ties_failures_and_budget() {
        let s = one("x", Dimension::IntRange { lo: 0, hi: 9 });
        let r = random_search(&s, 6, |_, _| Ok(1.0), 0, 1).unwrap();
        assert_eq!(r.best.index, 0);
        let r = random_search(&s, 1, |_, _| Ok(2.0), 0, 1).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert!(random_search(&s, 0, |_, _| Ok(2.0), 0, 1).is_err());

        let flaky = |a: &Assignment, _| -> Result<f64> {
            let x = a["x"].as_i64().unwrap();
            if x % 2 == 0 {
                Err(Error::data("even"))
            } else {
                Ok(x as f64)
            }
        };
        let r = random_search(&s, 20, flaky, 4, 1).unwrap();
        assert_eq!(r.trials.len(), 20);
        assert!(r.trials.iter().any(|t| matches!(t.status, TrialStatus::Failed { .. })));
        let par = random_search(&s, 20, flaky, 4, 3).unwrap();
        assert_eq!(par.best.index, r.best.index);
        assert!(matches!(
            random_search(&s, 3, |_, _| Err(Error::data("no")), 0, 1),
            Err(Error::Search(_))
        ));
    }

    #[test]
    fn trial_log_lines() {
        let s = one("x", Dimension::IntRange { lo: 0, hi: 9 });
        let r = random_search(&s, 3, |_, _| Ok(1.0), 0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        write_trial_log(&path, &r.trials).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let t: Trial = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(t, r.trials[0]);
    }
}
