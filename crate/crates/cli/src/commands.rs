use std::path::{Path, PathBuf};

use dmidas_core::data::{
    export_decomposition, export_metrics, generate_synthetic, preset, write_dataset_csv, ExportFormat, SyntheticSpec,
    TimeSeriesDataset,
};
use dmidas_core::eval::{
    grouped_forecasts, run_benchmark, score_windows, seasonal_naive_forecast, train_protocol, Candidate, MetricEntry,
    MetricsReport,
};
use dmidas_core::hypersearch::{apply_assignment, random_search, write_trial_log, SearchSpace};
use dmidas_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, ModelSpec};
use dmidas_core::training::{split_tail, DataSplit, Scaler, TrainedModel, TrainHistory};
use dmidas_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Flags shared by every command.
#[derive(Debug, Clone)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

impl Globals {
    /// The config file (or defaults) with `--seed` and `--data` applied.
    fn run_config(&self, data: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.training.seed = s;
        }
        if let Some(d) = data {
            cfg.data.path = Some(d.to_path_buf());
            cfg.data.preset = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .ok_or_else(|| Error::config("this command needs --out <dir>"))?;
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(dir.join("config.resolved"), cfg.to_toml()?)?;
    Ok(())
}

/// Metadata stored next to each member's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MemberMeta {
    model_name: String,
    dataset: String,
    series: Vec<String>,
    group: usize,
    member: usize,
    seed: u64,
    best_val_mae: f64,
    val_len: usize,
    test_len: usize,
    scaler: Scaler,
}

pub fn generate(g: &Globals, preset_name: Option<&str>, spec_file: Option<&Path>) -> Result<()> {
    let mut spec: SyntheticSpec = match (preset_name, spec_file) {
        (Some(_), Some(_)) => return Err(Error::config("pass either --preset or --spec, not both")),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::config(e.to_string()))?
        }
        (name, None) => preset(name.unwrap_or("multifreq-v1"))?,
    };
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let out = g
        .out
        .clone()
        .ok_or_else(|| Error::config("generate needs --out <file.csv>"))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let ds = generate_synthetic(&spec)?;
    write_dataset_csv(&ds, &out)?;
    eprintln!("wrote {} points of `{}` to {}", spec.length, spec.id, out.display());
    Ok(())
}

fn split_for(cfg: &RunConfig, ds: &TimeSeriesDataset, spec: &ModelSpec) -> Result<DataSplit> {
    split_tail(ds, cfg.evaluation.val_len, cfg.evaluation.test_len, spec.input_size(), spec.horizon())
}

/// `(series ids served, members)` per trained ensemble.
type Groups = Vec<(Vec<String>, Vec<TrainedModel>)>;

/// Trains per protocol and returns the ensemble's validation score.
fn fit(cfg: &RunConfig, ds: &TimeSeriesDataset, jobs: usize) -> Result<(DataSplit, Groups, f64)> {
    let spec = cfg.model_spec()?;
    let split = split_for(cfg, ds, &spec)?;
    let groups = train_protocol(&cfg.model.template, &split, &cfg.protocol(), jobs)?;
    let val = split.val_windows();
    let val_mae = score_windows(&val, &grouped_forecasts(&groups, &val)?)?.mae;
    Ok((split, groups, val_mae))
}

pub fn train(g: &Globals, data: Option<&Path>) -> Result<()> {
    let cfg = g.run_config(data)?;
    let (name, ds) = cfg.load_data()?;
    let out = g.out_dir()?;
    write_resolved(&out, &cfg)?;
    let (_, groups, val_mae) = fit(&cfg, &ds, g.jobs)?;

    let ckpt_dir = out.join("checkpoints");
    let hist_dir = out.join("history");
    std::fs::create_dir_all(&ckpt_dir)?;
    std::fs::create_dir_all(&hist_dir)?;
    let mut members = Vec::new();
    for (gi, (series, trained)) in groups.iter().enumerate() {
        for (k, m) in trained.iter().enumerate() {
            let stem = if groups.len() == 1 {
                format!("member_{k}")
            } else {
                format!("member_{gi}_{k}")
            };
            let meta = MemberMeta {
                model_name: cfg.model.template.name().to_string(),
                dataset: name.clone(),
                series: series.clone(),
                group: gi,
                member: k,
                seed: m.seed,
                best_val_mae: m.best_val_mae,
                val_len: cfg.evaluation.val_len,
                test_len: cfg.evaluation.test_len,
                scaler: m.scaler.clone(),
            };
            save_checkpoint(
                &ckpt_dir.join(format!("{stem}.ckpt")),
                &Checkpoint {
                    spec: m.model.spec().clone(),
                    params: m.params.clone(),
                    meta: serde_json::to_value(&meta)?,
                },
            )?;
            m.history.write_csv(&hist_dir.join(format!("{stem}.csv")))?;
            members.push(serde_json::json!({
                "file": format!("checkpoints/{stem}.ckpt"),
                "seed": m.seed,
                "best_val_mae": m.best_val_mae,
            }));
        }
    }
    let summary = serde_json::json!({
        "dataset": name,
        "horizon": cfg.model.horizon,
        "val_mae": val_mae,
        "members": members,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("validation MAE {val_mae}");
    Ok(())
}

/// Loads every `*.ckpt` under `dir` (or one file), grouped by the series
/// each ensemble serves.
fn load_members(path: &Path) -> Result<(Groups, MemberMeta)> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut f: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        f.sort();
        f
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Checkpoint(format!("no checkpoints found in {}", path.display())));
    }
    let mut groups: Groups = Vec::new();
    let mut first_meta = None;
    for f in files {
        let ck = load_checkpoint(&f)?;
        let meta: MemberMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::Checkpoint(format!("{}: bad metadata: {e}", f.display())))?;
        let member = TrainedModel {
            model: Model::new(ck.spec)?,
            params: ck.params,
            scaler: meta.scaler.clone(),
            history: TrainHistory::default(),
            best_val_mae: meta.best_val_mae,
            seed: meta.seed,
        };
        match groups.iter_mut().find(|(s, _)| *s == meta.series) {
            Some((_, m)) => m.push(member),
            None => groups.push((meta.series.clone(), vec![member])),
        }
        first_meta.get_or_insert(meta);
    }
    Ok((groups, first_meta.expect("at least one checkpoint")))
}

fn write_report(out: &Path, report: &MetricsReport) -> Result<()> {
    export_metrics(report, &out.join("metrics.json"), ExportFormat::Json)?;
    let table = report.render_table();
    std::fs::write(out.join("metrics.txt"), &table)?;
    print!("{table}");
    if !report.is_complete() {
        for f in &report.failures {
            eprintln!("cell ({}, H={}, {}) failed: {}", f.dataset, f.horizon, f.model, f.error);
        }
        return Err(Error::Search(format!("{} benchmark cell(s) failed", report.failures.len())));
    }
    Ok(())
}

pub fn evaluate(g: &Globals, data: Option<&Path>, checkpoints: Option<&Path>) -> Result<()> {
    let cfg = g.run_config(data)?;
    let (name, ds) = cfg.load_data()?;
    let out = g.out_dir()?;
    write_resolved(&out, &cfg)?;
    let report = match checkpoints {
        None => run_benchmark(&name, &ds, &cfg.candidates()?, &cfg.horizons(), &cfg.protocol(), g.jobs)?,
        Some(path) => {
            let (groups, meta) = load_members(path)?;
            let spec = groups[0].1[0].model.spec().clone();
            let h = spec.horizon();
            let split = split_tail(&ds, meta.val_len, meta.test_len, spec.input_size(), h)?;
            let test = split.test_windows();
            let score = score_windows(&test, &grouped_forecasts(&groups, &test)?)?;
            let mut report = MetricsReport::default();
            report.push(MetricEntry {
                dataset: name.clone(),
                horizon: h,
                model: meta.model_name,
                mae: score.mae,
                rmse: score.rmse,
            })?;
            for c in cfg.candidates()? {
                let period = match c {
                    Candidate::SeasonalNaive { period } => period,
                    Candidate::Naive => 1,
                    Candidate::Neural { .. } => continue,
                };
                let bsplit = split_tail(&ds, meta.val_len, meta.test_len, period, h)?;
                let btest = bsplit.test_windows();
                let f = btest
                    .iter()
                    .map(|w| seasonal_naive_forecast(&w.input, h, period))
                    .collect::<Result<Vec<_>>>()?;
                let s = score_windows(&btest, &f)?;
                report.push(MetricEntry {
                    dataset: name.clone(),
                    horizon: h,
                    model: c.name(),
                    mae: s.mae,
                    rmse: s.rmse,
                })?;
            }
            report
        }
    };
    write_report(&out, &report)
}

fn pick_series<'a>(groups: &'a Groups, series: Option<&str>) -> Result<(String, &'a [TrainedModel])> {
    match series {
        Some(id) => groups
            .iter()
            .find(|(ids, _)| ids.iter().any(|s| s == id))
            .map(|(_, m)| (id.to_string(), m.as_slice()))
            .ok_or_else(|| Error::config(format!("no checkpoint serves series `{id}`"))),
        None => Ok((groups[0].0[0].clone(), groups[0].1.as_slice())),
    }
}

pub fn forecast(
    g: &Globals,
    data: Option<&Path>,
    checkpoints: &Path,
    series: Option<&str>,
    end: Option<usize>,
) -> Result<()> {
    let cfg = g.run_config(data)?;
    let (_, ds) = cfg.load_data()?;
    let (groups, _) = load_members(checkpoints)?;
    let (id, members) = pick_series(&groups, series)?;
    let values = &ds
        .get(&id)
        .ok_or_else(|| Error::data(format!("series `{id}` not in the data")))?
        .values;
    let l = members[0].model.input_size();
    let end = end.unwrap_or(values.len());
    if end > values.len() || end < l {
        return Err(Error::config(format!(
            "--end {end} must lie in {l}..={} for series `{id}`",
            values.len()
        )));
    }
    let f = dmidas_core::training::ensemble_forecast(members, &id, &values[end - l..end])?;
    let mut text = String::from("t,forecast\n");
    for (i, v) in f.iter().enumerate() {
        text.push_str(&format!("{},{v}\n", end + i));
    }
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn decompose(
    g: &Globals,
    data: Option<&Path>,
    checkpoint: &Path,
    series: Option<&str>,
    window: usize,
) -> Result<()> {
    let cfg = g.run_config(data)?;
    let (_, ds) = cfg.load_data()?;
    let (groups, meta) = load_members(checkpoint)?;
    let (id, members) = pick_series(&groups, series)?;
    let member = &members[0];
    let spec = member.model.spec();
    let split = split_tail(&ds, meta.val_len, meta.test_len, spec.input_size(), spec.horizon())?.only(&id)?;
    let test = split.test_windows();
    let w = test.get(window).ok_or_else(|| {
        Error::config(format!(
            "window {window} out of range: series `{id}` has {} test windows",
            test.len()
        ))
    })?;
    let d = member.scaler.denorm_for(&id, &w.input)?;
    let bundle = member.model.decompose(&member.params, &d.forward(&w.input))?;
    let out = g
        .out
        .clone()
        .ok_or_else(|| Error::config("decompose needs --out <file>"))?;
    let format = if out.extension().is_some_and(|e| e == "json") {
        ExportFormat::Json
    } else {
        ExportFormat::Csv
    };
    export_decomposition(&bundle, &out, format)?;
    for label in &bundle.block_labels {
        eprintln!("{label}");
    }
    Ok(())
}

pub fn search(g: &Globals, data: Option<&Path>, budget: Option<usize>) -> Result<()> {
    let cfg = g.run_config(data)?;
    let (_, ds) = cfg.load_data()?;
    let budget = budget.unwrap_or(cfg.search.budget);
    if budget == 0 {
        return Err(Error::config("search budget must be at least 1"));
    }
    let space = cfg.search_space().unwrap_or_else(SearchSpace::default_space);
    let out = g.out_dir()?;
    write_resolved(&out, &cfg)?;
    let configure = |assignment: &_, seed: u64| -> Result<RunConfig> {
        let mut c = cfg.clone();
        apply_assignment(assignment, &mut c.model.template, &mut c.training)?;
        c.training.seed = seed;
        c.validate()?;
        Ok(c)
    };
    let result = random_search(
        &space,
        budget,
        |a, seed| fit(&configure(a, seed)?, &ds, 1).map(|(_, _, v)| v),
        cfg.training.seed,
        g.jobs,
    )?;
    write_trial_log(&out.join("trials.jsonl"), &result.trials)?;
    let best = configure(&result.best.config, result.best.seed)?;
    std::fs::write(out.join("best_config.toml"), best.to_toml()?)?;
    println!(
        "best trial {} validation MAE {}",
        result.best.index,
        result.best.validation_mae.expect("best trial completed")
    );
    Ok(())
}

pub fn param_count(g: &Globals) -> Result<()> {
    let cfg = g.run_config(None)?;
    let spec = cfg.model_spec()?;
    let model = Model::new(spec.clone())?;
    let b = model.count_parameters();
    println!("model ({}, H={}):", cfg.model.template.name(), spec.horizon());
    println!("{b}");
    if let ModelSpec::Stacked(mc) = &spec {
        let twin = Model::new(ModelSpec::Stacked(mc.generic_twin()))?.count_parameters();
        println!("generic twin (r=1, kernel=1):");
        println!("{twin}");
        let pct = |a: usize, t: usize| 100.0 * (t as f64 - a as f64) / t as f64;
        println!(
            "forecast knots: {} vs {} ({:.1}% reduction)",
            b.theta_forecast_total,
            twin.theta_forecast_total,
            pct(b.theta_forecast_total, twin.theta_forecast_total)
        );
        println!(
            "total parameters: {} vs {} ({:.1}% reduction)",
            b.total,
            twin.total,
            pct(b.total, twin.total)
        );
    }
    Ok(())
}
