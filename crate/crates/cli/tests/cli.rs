//! End-to-end binary behaviors: exit codes, JSON shape, overrides and
//! reproducibility from manifests.

use std::path::Path;
use std::process::{Command, Output};

fn hivage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hivage"))
        .args(args)
        .env_remove("HIVAGE_MODEL_RHO0")
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(hivage(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(hivage(&[]).status.code(), Some(64));
    assert_eq!(hivage(&["--help"]).status.code(), Some(0));
    assert_eq!(hivage(&["simulate", "--bogus-flag"]).status.code(), Some(64));
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = hivage(&["simulate", "--config", "missing.toml", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.toml"), "stderr: {stderr}");
}

#[test]
fn invalid_parameter_is_a_validation_error() {
    let out = hivage(&["r0", "--set", "model.mu=0"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mu"), "stderr: {stderr}");
}

#[test]
fn numerical_blowup_exits_two() {
    // A 2-month step against the strongest hazard overshoots the
    // susceptible update; the solver must abort, not emit garbage.
    let dir = tempfile::tempdir().unwrap();
    let out = hivage(&[
        "simulate",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "grid.da=2.0",
        "--set",
        "grid.t_final=60",
        "--set",
        "model.beta_hazard=509,13.3,0",
        "--set",
        "model.rho0=5.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn r0_reports_the_reference_band() {
    let out = hivage(&["r0"]);
    assert_eq!(out.status.code(), Some(0));
    let value = json_stdout(&out);
    let r0 = value["r0"].as_f64().unwrap();
    assert!((r0 - 2.55).abs() <= 0.15, "r0 = {r0}");
    for key in ["omega", "gamma", "dbar", "dfe"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    assert!(value.get("endemic").is_some(), "R0 > 1 must report endemic");
}

#[test]
fn equilibrium_omits_endemic_below_threshold() {
    let out = hivage(&["equilibrium", "--set", "model.rho0=0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let value = json_stdout(&out);
    assert!(value["r0"].as_f64().unwrap() < 1.0);
    assert!(value.get("endemic").is_none());
    assert_eq!(value["dfe"]["s"].as_f64().unwrap(), 900.0);
}

#[test]
fn env_override_applies() {
    let out = Command::new(env!("CARGO_BIN_EXE_hivage"))
        .args(["r0"])
        .env("HIVAGE_MODEL_RHO0", "0.0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let value = json_stdout(&out);
    assert_eq!(value["r0"].as_f64().unwrap(), 0.0);
}

#[test]
fn flags_override_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_hivage"))
        .args(["r0", "--set", "model.rho0=2.48"])
        .env("HIVAGE_MODEL_RHO0", "0.0")
        .output()
        .unwrap();
    let value = json_stdout(&out);
    assert!(value["r0"].as_f64().unwrap() > 1.0);
}

#[test]
fn trajectory_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = hivage(&[
        "simulate",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "grid.da=0.5",
        "--set",
        "grid.t_final=60",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,S,I1,I2,I3,P,E1,E2,E3");
    let mut rows = 0;
    for line in lines {
        for field in line.split(',') {
            let v: f64 = field.parse().expect("numeric field");
            assert!(v.is_finite());
        }
        rows += 1;
    }
    assert_eq!(rows, 121);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn optimize_reruns_bit_identically_from_manifest() {
    let dir1 = tempfile::tempdir().unwrap();
    let args = [
        "optimize",
        "--set",
        "grid.da=2.0",
        "--set",
        "grid.t_final=200",
        "--set",
        "control.max_iter=40",
    ];
    let run1 = hivage(&[&args[..], &["--out", dir1.path().to_str().unwrap()]].concat());
    assert_eq!(run1.status.code(), Some(0), "{}", String::from_utf8_lossy(&run1.stderr));

    // Re-run purely from the manifest's embedded configuration.
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir1.path().join("manifest.json")).unwrap(),
    )
    .unwrap();
    let config_toml = manifest["config_toml"].as_str().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let cfg_path = dir2.path().join("rerun.toml");
    std::fs::write(&cfg_path, config_toml).unwrap();
    let run2 = hivage(&[
        "optimize",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir2.path().to_str().unwrap(),
    ]);
    assert_eq!(run2.status.code(), Some(0));

    let bytes = |dir: &Path, name: &str| std::fs::read(dir.join(name)).unwrap();
    assert_eq!(
        bytes(dir1.path(), "controls.csv"),
        bytes(dir2.path(), "controls.csv"),
        "controls.csv differs between identical configurations"
    );
    assert_eq!(
        bytes(dir1.path(), "objective.csv"),
        bytes(dir2.path(), "objective.csv")
    );

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir1.path().join("summary.json")).unwrap(),
    )
    .unwrap();
    for key in ["J_star", "J_zero", "delta", "iterations", "converged"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn controlled_run_consumes_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let controls = dir.path().join("controls.csv");
    std::fs::write(&controls, "t,h1,h2,h2TF\n0,0.5,0.2,0.1\n30,0.1,0.0,0.0\n").unwrap();
    let out = hivage(&[
        "simulate-controlled",
        "--controls",
        controls.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "grid.da=0.5",
        "--set",
        "grid.t_final=60",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("controlled_trajectory.csv")).unwrap();
    assert!(text.starts_with("t,S,I1,I1TF,I1TS,I2,I2TF,I2TS,I3,P,E1,E2,E2TF,E3"));

    // Out-of-bounds schedules are validation failures.
    std::fs::write(&controls, "t,h1,h2,h2TF\n0,1.5,0,0\n").unwrap();
    let out = hivage(&[
        "simulate-controlled",
        "--controls",
        controls.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "grid.da=0.5",
        "--set",
        "grid.t_final=60",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn surface_csv_has_failure_markers_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = hivage(&[
        "sweep-performance",
        "--scenario",
        "h2-only",
        "--p-grid",
        "0:0.1:2",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "grid.da=2.0",
        "--set",
        "grid.t_final=200",
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("surface.csv")).unwrap();
    assert!(text.starts_with("p1,p2,p2TF,delta,converged"));
    assert_eq!(text.lines().count(), 3);
}
