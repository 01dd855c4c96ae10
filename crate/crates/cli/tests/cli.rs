use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn goodset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goodset"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn config_with(name: &str, edit: impl FnOnce(&mut Value), dir: &Path) -> String {
    let text = std::fs::read_to_string(configs().join(name)).unwrap();
    let mut value: Value = serde_json::from_str(&text).unwrap();
    edit(&mut value);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn sir_config() -> String {
    configs().join("sir_simulate.json").to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_one_row_per_day() {
    let out = goodset(&["simulate", "--config", &sir_config(), "--horizon", "40"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["t", "S", "I", "R"]);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 41);
    assert_eq!(rows[0], vec![1.0, 0.95, 0.05, 0.0]);
    let peak = rows.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert_eq!(peak[0], 24.0);
    for r in &rows {
        assert!((r[1] + r[2] + r[3] - 1.0).abs() < 1e-12);
    }

    let out = goodset(&["simulate", "--config", &sir_config(), "--horizon", "0"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn simulate_writes_files_with_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = goodset(&["simulate", "--config", &sir_config(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("trajectory.csv").exists());
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["simulate"]["horizon"], 40);
}

#[test]
fn usage_errors_exit_2() {
    let out = goodset(&["simulate", "--config", &sir_config(), "--params", "0.25"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(goodset(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(goodset(&["simulate", "--config", "/no/such/config.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = config_with("sir_simulate.json", |v| v["unknown"] = Value::from(1), dir.path());
    assert_eq!(goodset(&["simulate", "--config", &bad]).status.code(), Some(2));
}

#[test]
fn scan_guard_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("table1_z3_r005.json");
    let out = goodset(&[
        "scan",
        "--config",
        cfg.to_str().unwrap(),
        "--limit",
        "1000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn tiny_band_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(
        "table1_z3_r005.json",
        |v| v["fitness"]["rule"]["r"] = Value::from(1e-12),
        dir.path(),
    );
    let out_dir = dir.path().join("out");
    let out = goodset(&["scan", "--config", &cfg, "--workers", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scan: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("scan.json")).unwrap()).unwrap();
    assert_eq!(scan["p"], 0);
    assert_eq!(std::fs::read_to_string(out_dir.join("good.csv")).unwrap().lines().count(), 1);
}

#[test]
fn estimate_records_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("table2_z3_r010.json");
    let out = goodset(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "5000",
        "--seed",
        "8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let set: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("goodset.json")).unwrap()).unwrap();
    assert_eq!(set["n_sampled"], 5000);
    assert_eq!(set["seed"], 8);
}

#[test]
fn bounds_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = goodset(&[
        "bounds", "--c", "0.9", "--delta", "0.01", "--g", "0.000136", "--p", "68", "--out", d,
    ]);
    assert!(out.status.success());
    let values: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    let eq10 = values.iter().find(|v| v["query"]["kind"] == "eq10").unwrap();
    assert!((eq10["value"].as_f64().unwrap() - 211_219.0).abs() <= 1.0);
    let eq9 = values.iter().find(|v| v["query"]["kind"] == "eq9").unwrap();
    assert!((eq9["value"].as_f64().unwrap() / 422_704.0 - 1.0).abs() < 1e-5);

    let out = goodset(&["bounds", "--c", "0.5", "--delta", "0.01", "--g", "0.01", "--p", "10", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(goodset(&["bounds", "--out", d]).status.code(), Some(2));
}

#[test]
fn curve_is_decreasing_in_c() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fig1_curve.json");
    let out = goodset(&["bounds", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("curve.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "m_improved").unwrap();
    let improved: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(improved.len(), 30);
    assert!(improved.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn covid_missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("covid_synthetic.json");
    let out = goodset(&[
        "covid",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        "/no/such/data.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn covid_malformed_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "date,confirmed,deaths,recovered\n2020-03-01,5,0,0\n2020-03-02,4,0,0\n").unwrap();
    let cfg = configs().join("covid_synthetic.json");
    let out = goodset(&[
        "covid",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn covid_writes_weekly_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(
        "covid_synthetic.json",
        |v| {
            v["covid"]["settings"]["n"] = Value::from(4000);
            v["covid"]["settings"]["n_pre"] = Value::from(2000);
            v["covid"]["first_t0"] = Value::from(28);
            v["covid"]["last_t0"] = Value::from(42);
        },
        dir.path(),
    );
    let out_dir = dir.path().join("out");
    let out = goodset(&["covid", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let peaks = std::fs::read_to_string(out_dir.join("peaks.csv")).unwrap();
    assert_eq!(peaks.lines().count(), 4);
    assert!(out_dir.join("data.csv").exists());
    assert!(out_dir.join("weekly.json").exists());
    assert!(out_dir.join("params_summary.csv").exists());
}
