//! Exit codes, file schemas, overrides, and config-file handling of the
//! `pblf` binary. Long horizons are trimmed with `--set t_final=...`
//! where the full run is not the point.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pblf"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn simulate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=2",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    for f in [
        "trajectory.csv",
        "report.txt",
        "config.json",
        "fig1.svg",
        "fig2.svg",
        "fig3.svg",
        "fig4.svg",
        "fig5.svg",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,x1,x2,z1,z2,alpha1,u,V,Vdot_analytic");
    assert_eq!(csv.lines().count(), 2002);
    // Constraint guides drawn in the output figure.
    let fig1 = std::fs::read_to_string(dir.path().join("fig1.svg")).unwrap();
    assert!(fig1.contains("k_x1"));
}

#[test]
fn simulate_both_mode_adds_error_space_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=1",
            "--set",
            "mode=both",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("trajectory_z.csv").exists());
}

#[test]
fn inadmissible_initial_state_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // x1(0) = 0.7 violates the declared output bound at t = 0.
    let out = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "x0=0.7,1.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{out:?}");
    // z1(0) = 0.6 >= k1 violates the admissibility hypothesis itself.
    let out = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "x0=0.8,1.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{out:?}");
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad_gain = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "kappa1=-1",
        ],
        dir.path(),
    );
    assert_eq!(code(&bad_gain), 3);

    let bad_key = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "nonsense=1",
        ],
        dir.path(),
    );
    assert_eq!(code(&bad_key), 3);

    let bad_preset = run(&["simulate", "--preset", "nope"], dir.path());
    assert_eq!(code(&bad_preset), 3);

    let single_kind = run(
        &[
            "compare",
            "--preset",
            "paper-output-constrained",
            "--kinds",
            "log-pblf",
        ],
        dir.path(),
    );
    assert_eq!(code(&single_kind), 3);

    let empty_values = run(
        &[
            "sweep",
            "--preset",
            "paper-output-constrained",
            "--param",
            "beta",
            "--values",
            "",
        ],
        dir.path(),
    );
    assert_eq!(code(&empty_values), 3);

    let bad_param = run(
        &[
            "sweep",
            "--preset",
            "paper-output-constrained",
            "--param",
            "gamma",
            "--values",
            "1,2",
        ],
        dir.path(),
    );
    assert_eq!(code(&bad_param), 3);
}

#[test]
fn verify_passes_on_trimmed_preset_and_fails_on_coarse_step() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(
        &[
            "verify",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=30",
        ],
        dir.path(),
    );
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(dir.path().join("report.json").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(json["all_passed"], serde_json::Value::Bool(true));
    assert!(json["checks"].as_array().unwrap().len() >= 8);
    assert_eq!(json["config"]["preset"], "paper-output-constrained");

    // A too-coarse step breaks the differencing tolerance; the report names
    // the failing check and its worst location.
    let coarse = run(
        &[
            "verify",
            "--preset",
            "paper-output-constrained",
            "--set",
            "h=0.1",
        ],
        dir.path(),
    );
    assert_eq!(code(&coarse), 1);
    let text = String::from_utf8_lossy(&coarse.stdout);
    assert!(text.contains("vdot-identity"));
    assert!(text.contains("FAIL"));
}

#[test]
fn compare_emits_overlays_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "compare",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=10",
            "--kinds",
            "standard-log,log-pblf,rational-pblf",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("kind,control_effort,max_abs_u,max_abs_x1"));
    assert_eq!(csv.lines().count(), 4);
    for f in ["compare_u.svg", "barrier_value.svg", "barrier_gradient.svg"] {
        assert!(dir.path().join(f).exists());
    }
    // The log p-BLF run holds the tight output bound.
    let log_row = csv.lines().find(|l| l.starts_with("log-pblf,")).unwrap();
    let max_x1: f64 = log_row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(max_x1 < 0.56);
}

#[test]
fn sweep_rows_follow_value_order_and_record_failures_in_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=10",
            "--param",
            "beta",
            "--values",
            "1,5,10,20",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let values: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values, vec![1.0, 5.0, 10.0, 20.0]);
    // Weak barriers (beta = 1, 5) genuinely violate the declared output
    // box during the large initial transient; those runs report the breach
    // in-row while the sweep itself succeeds.
    assert!(rows[0].contains("error"));
    assert!(rows[2].contains("ok"));
    assert!(rows[3].contains("ok"));
}

#[test]
fn h_sweep_shows_fourth_order_error_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=10",
            "--param",
            "h",
            "--values",
            "1e-3,5e-4,2.5e-4,1e-5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let last_col =
        |row: &str| -> Option<f64> { row.rsplit(',').next().and_then(|v| v.parse::<f64>().ok()) };
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let e1 = last_col(rows[0]).unwrap();
    let e2 = last_col(rows[1]).unwrap();
    let e3 = last_col(rows[2]).unwrap();
    assert!(e1 / e2 > 8.0, "e(1e-3)/e(5e-4) = {}", e1 / e2);
    assert!(e2 / e3 > 8.0, "e(5e-4)/e(2.5e-4) = {}", e2 / e3);
}

#[test]
fn config_file_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    // Snapshot a preset, edit it, and feed it back through --config.
    let snap = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=1",
        ],
        dir.path(),
    );
    assert_eq!(code(&snap), 0);
    let config_path = dir.path().join("config.json");
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    cfg["integrator"]["t_final"] = serde_json::json!(0.5);
    std::fs::write(&config_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let env_dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pblf"))
        .args(["simulate", "--config"])
        .arg(&config_path)
        .env("PBLF_OUT", env_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 0, "{out:?}");
    let csv = std::fs::read_to_string(env_dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);
}

#[test]
fn z_space_mode_runs_from_derived_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "simulate",
            "--preset",
            "paper-output-constrained",
            "--set",
            "t_final=1",
            "--set",
            "mode=z-space",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let second = csv.lines().nth(1).unwrap();
    // z-space runs still reconstruct and record the state columns.
    let x1: f64 = second.split(',').nth(1).unwrap().parse().unwrap();
    assert!((x1 - 0.25).abs() < 1e-12);
}
