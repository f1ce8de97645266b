use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn stsmc(dir: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stsmc"));
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out").arg(dir.join("out")).args(args).output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RIPPLE: &str = r#"{"schema_version": 1, "L": 2.5, "T": 0.25, "gains": {"k1p": 1, "k2p": 2},
    "x0": [2, 2], "delta": 1e-4, "samples_per_period": 200}"#;

#[test]
fn simulate_converges_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ripple.json", RIPPLE);
    let first = stsmc(dir.path(), Some(&cfg), &["simulate"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));

    let report = json(dir.path().join("out/report.json"));
    assert_eq!(report["limit_cycle"]["converged"], true);
    assert_eq!(report["limit_cycle"]["period"], 0.25);
    assert_eq!(report["manifest"]["command"], "simulate");

    let csv = std::fs::read(dir.path().join("out/trajectory.csv")).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("# stsmc simulate"));
    assert!(text.lines().any(|l| l == "t,x1,x2,w1,w2"));

    let second = stsmc(dir.path(), Some(&cfg), &["simulate"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("out/trajectory.csv")).unwrap(), csv);
}

#[test]
fn csv_cells_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ripple.json", RIPPLE);
    assert!(stsmc(dir.path(), Some(&cfg), &["simulate"]).status.success());
    let text = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut cells = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            // printing at 17 significant digits must reproduce the same bits
            let again: f64 = format!("{v:.16e}").parse().unwrap();
            assert_eq!(again.to_bits(), v.to_bits());
            assert_eq!(cell.parse::<f64>().unwrap().to_string().parse::<f64>().unwrap(), v);
            cells += 1;
        }
    }
    assert!(cells > 1000);
}

#[test]
fn constant_rate_diverges_with_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "div.json",
        r#"{"L": 1e9, "gains": {"k1p": 2e6, "k2p": 5e8}, "delta": 1e6,
            "perturbation": {"constant_rate": 1e9}, "t_end": 4000}"#,
    );
    let o = stsmc(dir.path(), Some(&cfg), &["simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = json(dir.path().join("out/report.json"));
    let t = report["divergence"]["time"].as_f64().unwrap();
    // x2 grows at L - k2 = 5e8, so it passes 1e12 shortly after t = 2000
    assert!((1900.0..2100.0).contains(&t), "t = {t}");
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let empty = write_config(&dir, "empty.json", "");
    let o = stsmc(dir.path(), Some(&empty), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"));

    let bad = write_config(&dir, "bad.json", r#"{"L": 2.5, "T": 0.25, "gains": {"k1p": "one", "k2p": 2}}"#);
    let o = stsmc(dir.path(), Some(&bad), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gains.k1p"), "{}", stderr(&o));

    let unknown = write_config(&dir, "unknown.json", r#"{"L": 2.5, "T": 0.25, "gains": {"k1p": 1, "k2p": 2}, "kp": 3}"#);
    let o = stsmc(dir.path(), Some(&unknown), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kp"));

    let version = write_config(&dir, "v.json", r#"{"schema_version": 9, "L": 2.5, "T": 0.25, "gains": {"k1p": 1, "k2p": 2}}"#);
    let o = stsmc(dir.path(), Some(&version), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("schema_version"));

    let o = stsmc(dir.path(), Some(&dir.path().join("missing.json")), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_point_sweep_has_no_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "sweep.json",
        r#"{"L": 2.5, "T": 0.25, "gains": {"k1p": 1.76, "k2p": 1.08}, "delta": 1e-4,
            "samples_per_period": 200, "sweep": {"param": "L", "values": [2.5]}}"#,
    );
    let o = stsmc(dir.path(), Some(&cfg), &["sweep"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(dir.path().join("out/fit.json"));
    assert_eq!(fit["rows"], 1);
    assert!(fit["fit"].is_null());
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn sweep_rejects_empty_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "sweep.json",
        r#"{"L": 2.5, "T": 0.25, "gains": {"k1p": 1.76, "k2p": 1.08}, "sweep": {"param": "T", "values": []}}"#,
    );
    assert_eq!(stsmc(dir.path(), Some(&cfg), &["sweep"]).status.code(), Some(1));
}

#[test]
fn tune_reference_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tune.json", r#"{"schema_version": 1, "L": 2.5, "T": 0.25, "eta": 0.01, "eps": 0.001}"#);
    let o = stsmc(dir.path(), Some(&cfg), &["tune"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = &json(dir.path().join("out/tuning.json"))["result"];
    assert_eq!(r["feasible"], true);
    assert_eq!(r["target_unmet"], false);
    assert!(r["W1"].as_f64().unwrap() <= 0.011);
}

#[test]
fn tune_saturated_problem_flags_unmet_target() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tune.json", r#"{"L": 25, "T": 2, "eta": 0.01, "eps": 0.001, "k1_max": 20}"#);
    let o = stsmc(dir.path(), Some(&cfg), &["tune"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = &json(dir.path().join("out/tuning.json"))["result"];
    assert_eq!(r["feasible"], true);
    assert_eq!(r["target_unmet"], true);
    assert!(r["W1"].as_f64().unwrap() > 0.011);
}

#[test]
fn tune_malformed_input() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tune.json", r#"{"L": 2.5, "T": 0.25, "eta": 0.01"#);
    assert_eq!(stsmc(dir.path(), Some(&cfg), &["tune"]).status.code(), Some(1));
    let cfg = write_config(&dir, "tune2.json", r#"{"L": 2.5, "T": 0.25, "eta": -1, "eps": 0.001}"#);
    assert_eq!(stsmc(dir.path(), Some(&cfg), &["tune"]).status.code(), Some(1));
}

fn check_gains(args: &[&str]) -> Value {
    let dir = TempDir::new().unwrap();
    let mut all = vec!["check-gains"];
    all.extend_from_slice(args);
    let o = stsmc(dir.path(), None, &all);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    json(dir.path().join("out/check_gains.json"))
}

#[test]
fn check_gains_examples() {
    let r = check_gains(&["--k1", "1", "--k2", "2", "--L", "2.5", "--T", "0.25"]);
    assert_eq!(r["under_tuned"], true);
    assert_eq!(r["finite_time"], false);

    // 1.8·√5.25 = 4.1243, so the rounded 4.12 sits just below the threshold
    let r = check_gains(&["--k1", "4.1244", "--k2", "2.75", "--L", "2.5", "--T", "2"]);
    assert_eq!(r["finite_time"], true);
    assert_eq!(r["bounds"]["W1"].as_f64().unwrap(), 0.0);
    let r = check_gains(&["--k1", "4.12", "--k2", "2.75", "--L", "2.5", "--T", "2"]);
    assert_eq!(r["finite_time"], false);

    let r = check_gains(&["--k1", "4.12", "--k2", "0.43", "--L", "2.5", "--T", "2"]);
    assert_eq!(r["w1_bound_gain"], true);
    // (L - k2)² n² T² / (k1 - 2(L - k2)/k1)² with n = 1/2
    let (l, k1, k2, t): (f64, f64, f64, f64) = (2.5, 4.12, 0.43, 2.0);
    let expect = (l - k2).powi(2) * 0.25 * t * t / (k1 - 2.0 * (l - k2) / k1).powi(2);
    assert!((r["bounds"]["W1"].as_f64().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn check_gains_needs_every_value() {
    let dir = TempDir::new().unwrap();
    let o = stsmc(dir.path(), None, &["check-gains", "--k1", "1", "--k2", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('L'));
}
