use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rc")).args(args).env_remove("RC_THREADS").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, epsilon: f64, global: &str, extra: &str) -> std::path::PathBuf {
    let text = format!(
        r#"{{
  "generator": {{"name": "gaussian_isotropic", "params": {{"d": 4}}}},
  "n": 800,
  "recipe": {{
    "epsilon": {epsilon},
    "rho": 0.0,
    "k": 1,
    "local_strategy": {{"name": "none"}},
    "global_strategy": {global},
    "seed": 3
  }},
  "estimator": {{"name": "filter_mean"}},
  "metrics": ["l2_mean_error", "runtime_ms"],
  "seeds": [1, 2, 3, 4, 5, 6, 7]{extra}
}}
"#
    );
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn gen_then_estimate_is_sample_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", 0.05, r#"{"name": "none"}"#, "");
    let data = dir.path().join("data.rcps");
    let out = rc(&["gen", "--config", path(&cfg), "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = rc(&["estimate", "--config", path(&cfg), "--in", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean: Vec<f64> = serde_json::from_value(v["mean"].clone()).unwrap();

    let points = rc_core::io::read_points(&data).unwrap();
    for (a, b) in mean.iter().zip(points.mean()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn corrupt_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", 0.1, r#"{"name": "cluster", "params": {"radius": 50}}"#, "");
    let clean = dir.path().join("clean.csv");
    let dirty = dir.path().join("dirty.csv");
    assert!(rc(&["gen", "--config", path(&cfg), "--out", path(&clean)]).status.success());
    assert!(rc(&["corrupt", "--config", path(&cfg), "--in", path(&clean), "--out", path(&dirty)]).status.success());
    let t = rc_core::io::read_points(&dirty).unwrap();
    assert_eq!(t.len(), 800);

    let trace = dir.path().join("trace.jsonl");
    let out = rc(&["estimate", "--config", path(&cfg), "--in", path(&dirty), "--trace", path(&trace), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    let err: f64 = text
        .lines()
        .filter(|l| l.starts_with("mean["))
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(err < 1.0, "{err}");
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() >= 2);
}

#[test]
fn sweep_rows_determinism_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let grid = r#", "sweep": {"epsilon": [0.02, 0.05, 0.1]}"#;
    let cfg = write_config(dir.path(), "cfg.json", 0.1, r#"{"name": "cluster", "params": {"radius": 5}}"#, grid);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (p, threads) in [(&a, "2"), (&b, "1")] {
        let out = rc(&["sweep", "--config", path(&cfg), "--out", path(p), "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let deterministic = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.contains(",runtime_ms,")).map(String::from).collect()
    };
    let rows = deterministic(&a);
    assert_eq!(rows, deterministic(&b));
    assert_eq!(rows[0], "config_hash,seed,metric,value");
    let errors: Vec<&str> = rows[1..].iter().map(String::as_str).filter(|l| l.contains(",l2_mean_error,")).collect();
    assert_eq!(errors.len(), 3 * 7);

    let mut medians = Vec::new();
    for chunk in errors.chunks(7) {
        let mut v: Vec<f64> = chunk.iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        v.sort_by(f64::total_cmp);
        medians.push(v[3]);
    }
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
}

#[test]
fn verify_saddle_suite() {
    let out = rc(&["verify", "--suite", "saddle"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["suite"], "saddle");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"n\": 10,\n  \"seeds\": [1,]\n}\n").unwrap();
    let out = rc(&["sweep", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bad.json:3:"), "{msg}");

    assert_eq!(rc(&["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(rc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn degenerate_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    let mut text = String::new();
    for i in 0..10 {
        text.push_str(&format!("{},{}\n", if i == 0 { 1000.0 } else { i as f64 * 0.1 }, 0.0));
    }
    std::fs::write(&data, text).unwrap();
    let trace = dir.path().join("trace.jsonl");
    let args = ["estimate", "--in", path(&data), "--epsilon", "0.05", "--delta", "0.05", "--trace", path(&trace)];
    let out = rc(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(trace.exists());
}
