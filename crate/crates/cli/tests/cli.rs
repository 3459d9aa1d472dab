use std::process::{Command, Output};

use serde_json::Value;

fn eladapt(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eladapt")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn failure_line(o: &Output) -> Value {
    let text = stdout(o);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("failure summary printed");
    serde_json::from_str(line).unwrap()
}

#[test]
fn list_shows_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = eladapt(&["list"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), eladapt::harness::catalog().len());
    assert!(text.contains("tau_c-power_balance-drem_newlre"));
    assert!(text.contains("closed_loop_regulation-classical-known"));
}

#[test]
fn run_writes_csv_and_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = eladapt(
        &["run", "tau_a-classical-gradient", "--horizon", "2", "--dt", "0.002", "--estimator", "drem", "--out", "csv", "--json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["name"], "tau_a-classical-gradient");
    assert_eq!(summary["steps"], 1000);
    let csv = std::fs::read_to_string(dir.path().join("csv/tau_a-classical-gradient.csv")).unwrap();
    assert_eq!(csv.lines().count(), summary["samples"].as_u64().unwrap() as usize + 1);
}

#[test]
fn run_accepts_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "[short_pulse]\nbase = \"tau_b-power_balance-drem\"\nhorizon = 1.0\n\n[short_wave]\ninput = \"tau_c\"\nhorizon = 0.5\n",
    )
    .unwrap();
    let o = eladapt(&["run", "exp.toml", "--parameterization", "classical"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("scenario short_pulse") && text.contains("scenario short_wave"));
    assert!(dir.path().join("out/short_pulse.csv").is_file());
    assert!(dir.path().join("out/short_wave.csv").is_file());
}

#[test]
fn unknown_scenario_fails_with_machine_readable_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = eladapt(&["run", "tau_z-classical-gradient", "tau_a-classical-gradient", "--horizon", "0.1"], dir.path());
    assert!(!o.status.success());
    let v = failure_line(&o);
    assert_eq!(v["status"], "failed");
    let failures = v["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["name"], "tau_z-classical-gradient");
    assert!(stdout(&o).contains("scenario tau_a-classical-gradient"));
}

#[test]
fn invalid_flags_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["run", "tau_a-classical-gradient", "--dt", "-1"].as_slice(),
        ["run", "tau_a-classical-gradient", "--estimator", "lsq"].as_slice(),
        ["run", "tau_a-classical-gradient", "--estimator", "known"].as_slice(),
    ] {
        let o = eladapt(args, dir.path());
        assert!(!o.status.success(), "{args:?}");
        assert_eq!(failure_line(&o)["status"], "failed");
    }
    let o = eladapt(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(failure_line(&o)["status"], "failed");
    assert!(eladapt(&["--help"], dir.path()).status.success());
}

#[test]
fn check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = eladapt(&["check", "--json"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    for line in stdout(&o).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["passed"], true, "{line}");
    }
}
