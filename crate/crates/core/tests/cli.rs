//! Golden runs of the qcurv binary: output values, exit-code contract,
//! and report determinism.

use std::path::Path;
use std::process::{Command, Output};

fn qcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn json_report(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("report written");
    serde_json::from_str(&text).expect("valid JSON")
}

#[test]
fn eval_round_sphere_q() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = qcurv(&[
        "eval",
        "--metric",
        "builtin:round_sphere,dim=4",
        "--point",
        "0,0,0,0",
        "--point",
        "0.3,-0.2,0.1,0.4",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("q_holographic"));
    let report = json_report(&json);
    assert_eq!(report["version"], "1");
    assert_eq!(report["n"], 4);
    for point in report["points"].as_array().unwrap() {
        let q = point["q_holographic"].as_f64().unwrap();
        assert!((q - 6.0).abs() < 1e-7, "Q = {q}");
        assert!((point["q_direct"].as_f64().unwrap() - 6.0).abs() < 1e-7);
    }
    assert_eq!(report["summary"]["failed"], 0);
}

#[test]
fn eval_flat_six_dim_is_zero() {
    let out = qcurv(&[
        "eval",
        "--metric",
        "builtin:flat,dim=6",
        "--point",
        "0,0,0,0,0,0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("q_holographic = +0.0"));
}

#[test]
fn eval_spec_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("torus.toml");
    std::fs::write(
        &spec_path,
        r#"
dim = 2
kind = "conformally_flat"
phi = "a*sin(x1)"
periods = [6.283185307179586, 6.283185307179586]

[params]
a = 1.0
"#,
    )
    .unwrap();
    let json = dir.path().join("report.json");
    let out = qcurv(&[
        "eval",
        "--metric",
        spec_path.to_str().unwrap(),
        "--point",
        "0,0",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_report(&json);
    // φ = sin(x1) at the origin: Q = R/2 = 0 because sin''(0) = 0
    let q = report["points"][0]["q_holographic"].as_f64().unwrap();
    assert!(q.abs() < 1e-12, "Q = {q}");
}

#[test]
fn eval_syntax_error_exits_2_without_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("bad.toml");
    std::fs::write(
        &spec_path,
        "dim = 2\nkind = \"explicit\"\n[components]\ng11 = \"1 + * x1\"\n",
    )
    .unwrap();
    let json = dir.path().join("report.json");
    let out = qcurv(&[
        "eval",
        "--metric",
        spec_path.to_str().unwrap(),
        "--point",
        "0,0",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!json.exists(), "no partial report on the data stream");
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn eval_config_errors_exit_2() {
    // point length mismatch
    let out = qcurv(&[
        "eval",
        "--metric",
        "builtin:flat,dim=4",
        "--point",
        "0,0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // unknown builtin
    let out = qcurv(&[
        "eval",
        "--metric",
        "builtin:nosuch,dim=4",
        "--point",
        "0,0,0,0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // odd dimension
    let out = qcurv(&[
        "eval",
        "--metric",
        "builtin:flat,dim=3",
        "--point",
        "0,0,0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_numeric_domain_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("indefinite.toml");
    // negative-definite at the origin
    std::fs::write(
        &spec_path,
        "dim = 2\nkind = \"explicit\"\n[components]\ng11 = \"-1\"\ng22 = \"1\"\n",
    )
    .unwrap();
    let out = qcurv(&[
        "eval",
        "--metric",
        spec_path.to_str().unwrap(),
        "--point",
        "0,0",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_exit_codes_and_failure_listing() {
    let out = qcurv(&["verify", "--suite", "jets"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("checks passed"));

    // absurdly tight tolerances must fail with named checks
    let out = qcurv(&["verify", "--suite", "jets", "--tol-scale", "1e-6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("[FAIL]"));

    let out = qcurv(&["verify", "--suite", "nosuch"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_flatcase_suite_passes() {
    let out = qcurv(&["verify", "--suite", "flatcase"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!stdout(&out).contains("[FAIL]"));
}

#[test]
fn verify_report_deterministic_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = qcurv(&[
            "verify",
            "--suite",
            "jets",
            "--json",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let strip = |p: &Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b), "byte-identical modulo wall time");
}

#[test]
fn integrate_flat_torus() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = qcurv(&[
        "integrate",
        "--metric",
        "builtin:flat,dim=2",
        "--grid",
        "32",
        "--n",
        "2",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_report(&json);
    let ints = &report["config"]["integrals"];
    assert!(ints["int_q"].as_f64().unwrap().abs() < 1e-12);
    assert!(ints["int_v_top"].as_f64().unwrap().abs() < 1e-12);
    let vol = ints["volume"].as_f64().unwrap();
    assert!((vol - 4.0 * std::f64::consts::PI * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn integrate_conformal_invariance_two_factors() {
    let out = qcurv(&[
        "integrate",
        "--metric",
        "builtin:conf_flat_torus,dim=2,a=0.3",
        "--metric2",
        "builtin:conf_flat_torus,dim=2,a=0.2,preset=1",
        "--grid",
        "32",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("conformal_invariance"));
    assert!(!stdout(&out).contains("[FAIL]"));
}

#[test]
fn integrate_budget_gates_exit_3() {
    // n = 6 lattice rejected without the override
    let out = qcurv(&[
        "integrate",
        "--metric",
        "builtin:conf_flat_torus,dim=6",
        "--grid",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(3));

    // explicit point budget exceeded
    let out = qcurv(&[
        "integrate",
        "--metric",
        "builtin:conf_flat_torus,dim=4",
        "--grid",
        "32",
        "--max-points",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(3));

    // --n disagreeing with the metric is a config error
    let out = qcurv(&[
        "integrate",
        "--metric",
        "builtin:conf_flat_torus,dim=4",
        "--grid",
        "8",
        "--n",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
