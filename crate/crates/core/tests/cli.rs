use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn solitonlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solitonlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SOLITONLAB_OUT")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("output exists"))
        .expect("valid json")
}

#[test]
fn too_few_nodes_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = solitonlab(dir.path(), &["--nodes", "8", "flow"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn decomposing_a_non_soliton_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = solitonlab(
        dir.path(),
        &["--model", "DP1", "--nodes", "48", "decompose"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flow_then_verify_with_overridden_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let flow = solitonlab(dir.path(), &["--model", "DP1", "--nodes", "64", "flow"]);
    assert_eq!(
        flow.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&flow.stderr)
    );
    let state = dir.path().join("final_state.json");
    assert!(dir.path().join("flow_trace.csv").exists());

    let verify = solitonlab(
        dir.path(),
        &[
            "--model",
            "DP1",
            "--nodes",
            "64",
            "--tol.hessian",
            "2e-5",
            "verify",
            "--state",
            state.to_str().unwrap(),
        ],
    );
    assert_eq!(
        verify.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );
    let doc = read_json(&dir.path().join("verify.json"));
    assert_eq!(doc["all_pass"], Value::Bool(true));
    assert_eq!(doc["tolerances"]["hessian"].as_f64(), Some(2e-5));
    let hessian = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "hessian_formula")
        .unwrap();
    assert_eq!(hessian["status"], "pass");
    assert_eq!(hessian["report"]["tolerance"].as_f64(), Some(2e-5));
}

#[test]
fn impossible_tolerance_fails_verification_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = solitonlab(
        dir.path(),
        &["--nodes", "32", "--tol.first_variation=1e-30", "verify"],
    );
    assert_eq!(out.status.code(), Some(3));
    let doc = read_json(&dir.path().join("verify.json"));
    assert_eq!(doc["all_pass"], Value::Bool(false));
}

#[test]
fn mismatched_state_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        solitonlab(dir.path(), &["--nodes", "32", "flow"])
            .status
            .code(),
        Some(0)
    );
    let state = dir.path().join("final_state.json");
    let out = solitonlab(
        dir.path(),
        &[
            "--nodes",
            "40",
            "spectrum",
            "--state",
            state.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = solitonlab(
        dir.path(),
        &[
            "--model",
            "DP1",
            "--nodes",
            "32",
            "spectrum",
            "--state",
            state.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_directory_from_environment_yields_to_flag() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let run = |with_flag: bool| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_solitonlab"));
        cmd.args(["--nodes", "32", "spectrum"])
            .env("SOLITONLAB_OUT", env_dir.path());
        if with_flag {
            cmd.arg("--out").arg(flag_dir.path());
        }
        cmd.output().unwrap()
    };
    assert_eq!(run(false).status.code(), Some(0));
    assert!(env_dir.path().join("spectrum.json").exists());
    assert_eq!(run(true).status.code(), Some(0));
    assert!(flag_dir.path().join("spectrum.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"model": "DP1", "n_nodes": 40, "tolerances": {"hessian": 3e-5}}"#,
    )
    .unwrap();
    let out = solitonlab(
        dir.path(),
        &[
            "--config",
            config.to_str().unwrap(),
            "--nodes",
            "32",
            "spectrum",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = read_json(&dir.path().join("spectrum.json"));
    assert_eq!(doc["config"]["model"], "DP1");
    assert_eq!(doc["config"]["n_nodes"].as_u64(), Some(32));
    assert_eq!(doc["tolerances"]["hessian"].as_f64(), Some(3e-5));

    std::fs::write(&config, r#"{"n_nodes": 40, "bogus": 1}"#).unwrap();
    let out = solitonlab(
        dir.path(),
        &["--config", config.to_str().unwrap(), "spectrum"],
    );
    assert_eq!(out.status.code(), Some(1));
}
