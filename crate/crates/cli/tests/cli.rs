mod common;

use std::path::Path;

use common::{dmidas, generate_preset, path_str, slope_breaks, write_config};
use serde_json::Value;

const TINY: &str = r#"
[data]
preset = "multifreq-v1"

[model]
horizon = 8
mlp_width = 32
n_stacks = 3
blocks_per_stack = 1

[training]
iterations = 200
batch_size = 64
eval_every = 50

[ensemble]
n_members = 2

[evaluation]
val_len = 96
test_len = 192
models = ["dmidas", "seasonal-naive-24"]
"#;

fn read_values(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

/// `(dataset, horizon, model, cell)` leaves of a metrics JSON file.
fn metric_cells(path: &Path) -> Vec<(String, String, String, Value)> {
    let root: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let mut out = Vec::new();
    for (d, horizons) in root.as_object().unwrap() {
        for (h, models) in horizons.as_object().unwrap() {
            for (m, cell) in models.as_object().unwrap() {
                out.push((d.clone(), h.clone(), m.clone(), cell.clone()));
            }
        }
    }
    out
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let o = dmidas(args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn generate_preset_rows_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let a_dir = dir.path().join("a");
    let b_dir = dir.path().join("b");
    std::fs::create_dir_all(&a_dir).unwrap();
    std::fs::create_dir_all(&b_dir).unwrap();
    let a = read_values(&generate_preset(&a_dir, None));
    let b = read_values(&generate_preset(&b_dir, Some(7)));
    assert_eq!(a.len(), 4000);
    assert_eq!(b.len(), 4000);
    assert_ne!(a, b);

    // the same signal without noise: both files must differ from it by noise only
    let spec = write_config(
        dir.path(),
        "clean.toml",
        r#"
        id = "multifreq-v1"
        length = 4000
        seed = 1
        components = [
          { kind = "sinusoid", period = 24.0, amplitude = 10.0 },
          { kind = "sinusoid", period = 168.0, amplitude = 5.0 },
          { kind = "linear_trend", slope = 0.001 },
        ]
        "#,
    );
    let clean_path = dir.path().join("clean.csv");
    let o = dmidas(&["generate", "--spec", path_str(&spec), "--out", path_str(&clean_path)]);
    assert!(o.status.success());
    let clean = read_values(&clean_path);
    for noisy in [&a, &b] {
        let r: Vec<f64> = noisy.iter().zip(&clean).map(|(x, c)| x - c).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
        assert!(mean.abs() < 0.05, "residual mean {mean}");
        assert!((sd - 0.5).abs() < 0.05, "residual sd {sd}");
    }
}

#[test]
fn invalid_preset_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let (code, err) = exit_code(&["generate", "--preset", "nope", "--out", path_str(&out)]);
    assert_ne!(code, 0);
    assert!(err.contains("multifreq-v1"), "{err}");
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let missing = dir.path().join("missing.csv");
    let (code, _) = exit_code(&[
        "train",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&missing),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code, 2);

    let bad = write_config(dir.path(), "bad.toml", "[training]\nlearning_rate = 0.1\n");
    let (code, _) = exit_code(&["param-count", "--config", path_str(&bad)]);
    assert_eq!(code, 1);

    let (code, _) = exit_code(&["no-such-command"]);
    assert_eq!(code, 1);

    let ckpts = dir.path().join("ckpts");
    std::fs::create_dir_all(&ckpts).unwrap();
    std::fs::write(ckpts.join("member_0.ckpt"), "not a checkpoint").unwrap();
    let (code, _) = exit_code(&[
        "evaluate",
        "--config",
        path_str(&cfg),
        "--checkpoints",
        path_str(&ckpts),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn train_forecast_decompose_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_preset(dir.path(), None);
    let data_before = std::fs::read(&data).unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let t0 = std::time::Instant::now();
        let o = dmidas(&[
            "train",
            "--config",
            path_str(&cfg),
            "--data",
            path_str(&data),
            "--seed",
            "3",
            "--out",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(t0.elapsed().as_secs() < 60);
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["checkpoints/member_0.ckpt", "checkpoints/member_1.ckpt", "history/member_0.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("config.resolved").exists());
    let hist = std::fs::read_to_string(a.join("history/member_1.csv")).unwrap();
    assert!(hist.starts_with("iteration,train_loss,val_mae\n"));
    assert_eq!(std::fs::read(&data).unwrap(), data_before);

    // forecast: one row per horizon step
    let fc = dir.path().join("fc.csv");
    let o = dmidas(&[
        "forecast",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--checkpoints",
        path_str(&a.join("checkpoints")),
        "--end",
        "1000",
        "--out",
        path_str(&fc),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&fc);
    assert_eq!(header, ["t", "forecast"]);
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][0], 1000.0);

    // decompose: t, forecast and one column per block
    let dec = dir.path().join("dec.csv");
    let ckpt = a.join("checkpoints/member_0.ckpt");
    let o = dmidas(&[
        "decompose",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--checkpoint",
        path_str(&ckpt),
        "--window",
        "2",
        "--out",
        path_str(&dec),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dec);
    assert_eq!(header.len(), 5);
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let sum: f64 = r[2..].iter().sum();
        assert!((sum - r[1]).abs() < 1e-9 * r[1].abs().max(1.0), "{r:?}");
    }
    // knots per block for H=8, r=0.5: 4, 2, 1
    for (k, knots) in [4usize, 2, 1].into_iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[2 + k]).collect();
        assert!(slope_breaks(&col, 1e-9) < knots.max(1), "block {k}: {col:?}");
    }
    let (code, err) = exit_code(&[
        "decompose",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--checkpoint",
        path_str(&ckpt),
        "--window",
        "100000",
        "--out",
        path_str(&dec),
    ]);
    assert_eq!(code, 1, "{err}");

    // evaluate from checkpoints adds the configured baselines
    let ev = dir.path().join("eval");
    let o = dmidas(&[
        "evaluate",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--checkpoints",
        path_str(&a.join("checkpoints")),
        "--out",
        path_str(&ev),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cells = metric_cells(&ev.join("metrics.json"));
    let models: Vec<&str> = cells.iter().map(|c| c.2.as_str()).collect();
    assert_eq!(models, ["dmidas", "seasonal-naive-24"]);
    assert!(cells.iter().all(|c| c.0 == "data" && c.1 == "8" && c.3["mae"].is_f64()));
    assert!(ev.join("metrics.txt").exists());
    assert!(ev.join("config.resolved").exists());
}

#[test]
fn evaluate_constant_series_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("id,time,value\n");
    for t in 0..600 {
        csv.push_str(&format!("flat,{t},5.0\n"));
    }
    let data = dir.path().join("flat.csv");
    std::fs::write(&data, csv).unwrap();
    let cfg = write_config(
        dir.path(),
        "eval.toml",
        r#"
        [evaluation]
        horizons = [8, 16]
        val_len = 48
        test_len = 96
        models = ["naive", "seasonal-naive-24"]
        "#,
    );
    let out = dir.path().join("eval");
    let o = dmidas(&[
        "evaluate",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    // header plus RMSE and MAE rows for each of the two horizons
    assert_eq!(lines.len(), 5, "{table}");
    assert!(lines[0].contains("naive") && lines[0].contains("seasonal-naive-24"));
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split_whitespace().skip(3).collect();
        assert_eq!(cells, ["0.0000*", "0.0000*"], "{row}");
    }
    let cells = metric_cells(&out.join("metrics.json"));
    assert_eq!(cells.len(), 4);
    for (_, _, _, c) in cells {
        assert_eq!(c["mae"].as_f64(), Some(0.0));
        assert_eq!(c["rmse"].as_f64(), Some(0.0));
    }
}

#[test]
fn search_logs_trials_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_preset(dir.path(), None);
    let cfg = write_config(
        dir.path(),
        "search.toml",
        &TINY.replace("iterations = 200", "iterations = 60").replace(
            "[evaluation]",
            r#"[search]
dimensions = [
  { name = "lr", kind = "log_uniform", lo = 1e-4, hi = 1e-2 },
  { name = "mlp_width", kind = "choice", values = [16, 32] },
]

[evaluation]"#,
        ),
    );
    let out = dir.path().join("search");
    let o = dmidas(&[
        "search",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--budget",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("trials.jsonl")).unwrap();
    let trials: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(trials.len(), 2);
    let best = trials
        .iter()
        .filter_map(|t| t["validation_mae"].as_f64())
        .fold(f64::INFINITY, f64::min);

    let replay = dir.path().join("replay");
    let o = dmidas(&[
        "train",
        "--config",
        path_str(&out.join("best_config.toml")),
        "--data",
        path_str(&data),
        "--out",
        path_str(&replay),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(replay.join("summary.json")).unwrap()).unwrap();
    let val = summary["val_mae"].as_f64().unwrap();
    assert!((val - best).abs() < 1e-9, "{val} vs {best}");

    let (code, _) = exit_code(&[
        "search",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&data),
        "--budget",
        "0",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn param_count_reports_twin_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pc.toml", "[model]\nhorizon = 96\nn_stacks = 3\nblocks_per_stack = 1\n");
    let o = dmidas(&["param-count", "--config", path_str(&cfg)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("forecast knots: 84 vs 288 (70.8% reduction)"), "{text}");
    assert!(text.contains("geometric closed form"), "{text}");
    assert!(text.contains("84.0000"), "{text}");

    let flat = write_config(
        dir.path(),
        "r1.toml",
        "[model]\nhorizon = 96\nn_stacks = 3\nblocks_per_stack = 1\nbase_ratio = 1.0\npooling_kernel = 1\n",
    );
    let o = dmidas(&["param-count", "--config", path_str(&flat)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("forecast knots: 288 vs 288 (0.0% reduction)"), "{text}");
    assert!(text.contains("total parameters:") && text.contains("(0.0% reduction)"), "{text}");
}
