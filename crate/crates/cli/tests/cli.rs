//! Drives the `certabs` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use certabs_core::abstraction::min_delta2_for_tau;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn certabs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certabs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn line_config(extra_params: &str, formula: &str, prop: &str) -> String {
    format!(
        r#"
[system]
states = ["x"]
controls = ["u"]
dynamics = ["u"]
state_box = [[0.0, 1.0]]
control_box = [[-1.0, 1.0]]
lipschitz = 1.0
bound = 1.0

[[labelling.proposition]]
name = "p"
boxes = [[{prop}]]

[objective]
formula = "{formula}"

[parameters]
delta2 = 0.5
epsilon = 0.2
{extra_params}
"#
    )
}

fn value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in\n{text}"));
    line.split('=').nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn params_on_car_satisfies_both_inequalities() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "car.toml",
        "[system]\npreset = \"car\"\n[parameters]\ndelta1 = 0.0\ndelta2 = 0.1\nepsilon = 0.05\ntau_star = 0.5\n",
    );
    let o = certabs(&["params", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let margin = value(&s, "margin");
    let (e1, e2) = (value(&s, "eps1 "), value(&s, "eps2 "));
    assert!(margin < 0.1);
    assert!(e1 + e2 <= 0.05);
    let tau = value(&s, "tau ");
    let (d2, _) = min_delta2_for_tau(1.2674, 1.5574, tau, 0.0).unwrap();
    assert_eq!(value(&s, "delta2_min"), d2);
    assert!(s.contains("r* "));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("params.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["report"]["params"]["tau"].as_f64().unwrap(), tau);
}

#[test]
fn params_rejects_delta2_not_above_delta1() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &line_config("delta1 = 0.5", "G p", "[0.2, 0.8]"));
    let o = certabs(&["params", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta2 (0.5) must exceed delta1 (0.5)"), "{}", stderr(&o));
}

fn sweep(dir: &Path, delta1: f64, count: &str) -> Vec<Vec<f64>> {
    let cfg = write_config(
        dir,
        "car.toml",
        &format!("[system]\npreset = \"car\"\n[parameters]\ndelta1 = {delta1}\ndelta2 = 2.0\nepsilon = 1.0\n"),
    );
    let o = certabs(&["sweep", "--config", cfg.to_str().unwrap(), "--count", count], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(csv, stdout(&o));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,eta,mu,delta2_min,eps_min"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn sweep_columns() {
    let dir = TempDir::new().unwrap();
    let rows = sweep(dir.path(), 0.0, "50");
    assert_eq!(rows.len(), 50);
    assert!(rows.windows(2).all(|w| w[1][3] > w[0][3]));
    assert!((rows[0][0] - 1e-3).abs() < 1e-18 && rows[49][0] == 0.2);
    let rows = sweep(dir.path(), 0.3, "50");
    assert!(rows.iter().all(|r| r[3] >= 0.3));
    assert_eq!(sweep(dir.path(), 0.0, "1").len(), 1);
}

#[test]
fn decide_line_is_realizable_and_byte_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("line.toml");
    let o = certabs(&["decide", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("realizable for S_delta1"));
    let first = std::fs::read(dir.path().join("strategy.json")).unwrap();
    let manifest = std::fs::read(dir.path().join("decide.manifest.json")).unwrap();
    let o = certabs(&["decide", "--config", cfg.to_str().unwrap(), "--jobs", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("strategy.json")).unwrap(), first);
    assert_eq!(std::fs::read(dir.path().join("decide.manifest.json")).unwrap(), manifest);
}

#[test]
fn decide_with_eroded_goal_is_not_realizable() {
    let dir = TempDir::new().unwrap();
    // ε1 ≈ 0.055 erodes a 0.1-wide goal to nothing
    let cfg = write_config(dir.path(), "c.toml", &line_config("", "F p", "[0.45, 0.55]"));
    let o = certabs(&["decide", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("not realizable for S_delta2"));
    assert!(!dir.path().join("strategy.json").exists());
}

#[test]
fn malformed_formula_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &line_config("", "G (p", "[0.2, 0.8]"));
    let o = certabs(&["decide", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("objective.formula"), "{}", stderr(&o));
}

#[test]
fn simulate_invariance_controller() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("line.toml");
    let cfg = cfg.to_str().unwrap();
    assert!(certabs(&["synth", "--config", cfg], dir.path()).status.success());
    let o = certabs(&["simulate", "--config", cfg, "--runs", "100"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 100);
    for r in &rows {
        assert_eq!(r[5], "sat");
        assert_eq!(r[4], "false");
        let (dev, bound): (f64, f64) = (r[7].parse().unwrap(), r[8].parse().unwrap());
        assert!(dev <= bound);
    }
    assert!(dir.path().join("trajectories/run_00099.csv").exists());

    // the written trace and trajectory feed back into `check`
    let trace = dir.path().join("traces/run_00000.json");
    let o = certabs(&["check", "--trace", trace.to_str().unwrap(), "--formula", "G safe"], dir.path());
    assert_eq!(stdout(&o).lines().next(), Some("sat"));
    let traj = dir.path().join("trajectories/run_00000.csv");
    let o = certabs(&["check", "--config", cfg, "--trajectory", traj.to_str().unwrap()], dir.path());
    assert_eq!(stdout(&o).lines().next(), Some("sat"), "{}", stderr(&o));

    let empty = TempDir::new().unwrap();
    std::fs::copy(dir.path().join("strategy.json"), empty.path().join("strategy.json")).unwrap();
    let o = certabs(&["simulate", "--config", cfg, "--runs", "0"], empty.path());
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(empty.path().join("runs.csv")).unwrap();
    assert_eq!(table.lines().count(), 1);
}

#[test]
fn check_traces() {
    let dir = TempDir::new().unwrap();
    let t1 = write_config(dir.path(), "t1.json", r#"{"steps": [["p"], ["p"], ["q"]]}"#);
    let o = certabs(&["check", "--trace", t1.to_str().unwrap(), "--formula", "p U q"], dir.path());
    assert_eq!(stdout(&o).lines().next(), Some("sat"));
    let t2 = write_config(dir.path(), "t2.json", r#"{"steps": [["p"], ["p"], ["p"]]}"#);
    let o = certabs(&["check", "--trace", t2.to_str().unwrap(), "--formula", "G p"], dir.path());
    let s = stdout(&o);
    assert_eq!(s.lines().next(), Some("sat"));
    assert!(s.contains("finite trace"));
    let t3 = write_config(dir.path(), "t3.json", r#"{"alphabet": ["p"], "steps": [["p"], ["zz"]]}"#);
    let o = certabs(&["check", "--trace", t3.to_str().unwrap(), "--formula", "G p"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown proposition `zz`"));
    let o = certabs(&["check", "--trace", t2.to_str().unwrap(), "--formula", "F q"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
