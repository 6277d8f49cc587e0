use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edm-raim")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_three_files_and_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--trials", "2000", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("KS") && stdout.contains("false alarms"), "{stdout}");
    for f in ["trials.csv", "summary.json", "histogram.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert!(trials.starts_with("# sigma_v = 3.0\n"));
    let rows: Vec<&str> = trials.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "trial,q,lambda1,lambda2,lambda3,lambda4,lambda5,exceeded");
    assert_eq!(rows.len(), 2001);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["config"]["n_trials"], 2000);
    assert_eq!(summary["summary"]["n_trials"], 2000);
    assert!(summary["thresholds"]["one_sided"].is_number());
}

#[test]
fn zero_trials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--trials", "0", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config"));
    assert!(!dir.path().join("trials.csv").exists());
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&run(&["simulate", "--ordering", "sideways"])), 2);
    assert_eq!(code(&run(&["predict", "--pfa", "0.7"])), 2);
    assert_eq!(code(&run(&["predict", "--config", "/nonexistent.toml"])), 2);
}

#[test]
fn predict_default_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["predict", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = json(&dir.path().join("prediction.json"));
    for key in [
        "mu_num",
        "sigma_num",
        "mu_den",
        "sigma_den",
        "mu_q",
        "sigma_q",
        "covariance_num_den",
        "validity_warnings",
        "ordering",
        "thresholds",
        "config",
    ] {
        assert!(p.get(key).is_some(), "missing {key}");
    }
    assert_eq!(p["validity_warnings"], Value::Array(vec![]));
    assert_eq!(p["ordering"], "magnitude");
    let mu = p["mu_q"].as_f64().unwrap();
    let (num, den) = (p["mu_num"].as_f64().unwrap(), p["mu_den"].as_f64().unwrap());
    assert!((mu - num / den).abs() <= 1e-15 * mu.abs());
}

#[test]
fn doubling_sigma_doubles_sigma_q() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run(&["predict", "--sigma", "3", "--out", &out_arg(a.path())])), 0);
    assert_eq!(code(&run(&["predict", "--sigma", "6", "--out", &out_arg(b.path())])), 0);
    let sa = json(&a.path().join("prediction.json"))["sigma_q"].as_f64().unwrap();
    let sb = json(&b.path().join("prediction.json"))["sigma_q"].as_f64().unwrap();
    assert!((sb / sa - 2.0).abs() < 1e-12, "{}", sb / sa);
}

#[test]
fn zero_bias_prediction_explains_itself() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["predict", "--bias", "0", "--inflate-bias", "0", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 3);
    let msg = stderr(&o);
    assert!(msg.contains("eigenvectors") && msg.contains("unstable") && msg.contains("bias_inflation"), "{msg}");
}

#[test]
fn algebraic_ordering_refuses_with_advice() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["predict", "--ordering", "algebraic", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("increase the clock bias"));
    // simulation still runs and records why no prediction is available
    let o = run(&["simulate", "--ordering", "algebraic", "--trials", "200", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert!(s["prediction_error"].as_str().unwrap().contains("not simple"));
    assert!(s["prediction"].is_null());
    assert_eq!(s["summary"]["q_alternate"]["ordering"], "magnitude");
}

#[test]
fn audit_default_passes() {
    let o = run(&["audit"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    for name in ["finite-difference", "centering", "edm", "rank-collapse", "bias-activation"] {
        assert!(stdout.contains(&format!("PASS {name}")), "{stdout}");
    }
}

#[test]
fn config_file_with_inline_scenario_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let r = 6.371e6;
    let o = 2.656e7;
    let cfg = format!(
        "sigma_v = 2.0\nbias_b = 5.0e5\nn_trials = 300\nseed = 3\n\
         receiver = [0.0, 0.0, {r}]\n\
         satellites = [[{o}, 0.0, 0.0], [0.0, {o}, 0.0], [0.0, 0.0, {o}], [-{o}, 0.0, 0.0], [0.0, -{o}, 0.0], [1.0e7, 1.0e7, 2.0e7]]\n"
    );
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg).unwrap();
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--seed", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["config"]["seed"], 8);
    assert_eq!(s["config"]["sigma_v"], 2.0);
    assert_eq!(s["config"]["satellites"].as_array().unwrap().len(), 6);
    assert_eq!(s["summary"]["n_trials"], 300);
}

fn write_scenario(dir: &Path, sats: &str) -> std::path::PathBuf {
    fs::write(dir.join("geom.toml"), format!("receiver = [0.0, 0.0, 6.371e6]\nsatellites = {sats}\n")).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, "scenario_file = \"geom.toml\"\n").unwrap();
    cfg
}

#[test]
fn scenario_file_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(
        dir.path(),
        "[[2.1e7, 3.0e6, 1.5e7], [-4.0e6, 1.9e7, 1.8e7], [1.2e6, -1.4e7, 2.2e7], [-1.7e7, -6.0e6, 1.9e7], \
         [9.0e6, 9.5e6, 2.3e7], [-1.1e7, 1.3e7, 2.0e7]]",
    );
    let o = run(&["audit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
}

#[test]
fn symmetric_scenario_fails_audit() {
    // four satellites on the equator and one at the pole give repeated
    // eigenvalues, which the perturbation theory cannot handle
    let dir = tempfile::tempdir().unwrap();
    let o = 2.656e7;
    let cfg = write_scenario(
        dir.path(),
        &format!("[[{o}, 0.0, 0.0], [0.0, {o}, 0.0], [0.0, 0.0, {o}], [-{o}, 0.0, 0.0], [0.0, -{o}, 0.0]]"),
    );
    let out = run(&["audit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL finite-difference") && stdout.contains("PASS centering"), "{stdout}");
}

#[test]
fn audit_rejects_four_satellites() {
    let dir = tempfile::tempdir().unwrap();
    let o = 2.656e7;
    let path = dir.path().join("four.toml");
    fs::write(
        &path,
        format!("receiver = [0.0, 0.0, 6.371e6]\nsatellites = [[{o}, 0.0, 0.0], [0.0, {o}, 0.0], [0.0, 0.0, {o}], [-{o}, 0.0, 0.0]]\n"),
    )
    .unwrap();
    let out = run(&["audit", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least 5 satellites"), "{}", stderr(&out));
}

#[test]
fn audit_rejects_coplanar_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.toml");
    fs::write(
        &path,
        "receiver = [0.0, 0.0, 0.0]\n\
         satellites = [[1.0e7, 0.0, 0.0], [0.0, 1.0e7, 0.0], [-1.0e7, 0.0, 0.0], [0.0, -1.0e7, 0.0], [2.0e7, 2.0e7, 0.0]]\n",
    )
    .unwrap();
    let out = run(&["audit", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("coplanar"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = run(&["predict", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run(&["simulate", "--trials", "500", "--seed", "42", "--out", &out_arg(d.path())])), 0);
    }
    for f in ["trials.csv", "histogram.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
