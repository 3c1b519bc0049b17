#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Interior slope changes of a sampled piecewise-linear signal: the minimum
/// number of contiguous collinear runs covering it, minus one. Runs are
/// grown greedily while every second difference inside them stays within
/// `tol`, which is optimal because sub-runs of collinear runs are collinear.
pub fn slope_breaks(y: &[f64], tol: f64) -> usize {
    let mut breaks = 0;
    let mut start = 0;
    let mut t = 0;
    while t + 1 < y.len() {
        // try to add point t + 1 to the run [start, t]
        if t > start && (y[t + 1] - 2.0 * y[t] + y[t - 1]).abs() > tol {
            breaks += 1;
            start = t + 1;
        }
        t += 1;
    }
    breaks
}

pub fn dmidas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmidas"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes the multifreq preset as CSV into `dir`.
pub fn generate_preset(dir: &Path, seed: Option<u64>) -> PathBuf {
    let out = dir.join("data.csv");
    let mut args = vec!["generate", "--preset", "multifreq-v1", "--out", path_str(&out)];
    let s;
    if let Some(seed) = seed {
        s = seed.to_string();
        args.extend(["--seed", &s]);
    }
    let o = dmidas(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn slope_break_oracle() {
    let line: Vec<f64> = (0..10).map(|t| 0.5 * t as f64 - 2.0).collect();
    assert_eq!(slope_breaks(&line, 1e-9), 0);
    // knot on a grid point
    let v: Vec<f64> = (0..10).map(|t| (t as f64 - 4.0).abs()).collect();
    assert_eq!(slope_breaks(&v, 1e-9), 1);
    // knot between grid points 4 and 5 makes two nonzero second differences
    let w: Vec<f64> = (0..10).map(|t| (t as f64 - 4.5).abs()).collect();
    assert_eq!(slope_breaks(&w, 1e-9), 1);
    let zig: Vec<f64> = (0..6).map(|t| (t % 2) as f64).collect();
    assert_eq!(slope_breaks(&zig, 1e-9), 2);
}
