//! End-to-end checks of the command-line surface: exit codes, error
//! behavior, and the file layout each subcommand produces.

use std::path::Path;
use std::process::Command;

fn uavsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uavsim"))
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = r#"{
        "tabular": { "training_steps": 800 },
        "d3ql": {
            "training_steps": 800,
            "learning_start": 128,
            "buffer_capacity": 2048,
            "trunk": [12, 12]
        },
        "experiment": {
            "seeds": [1, 2],
            "sweep_z": [5, 10],
            "eval_horizon": 800,
            "trace_horizon": 150,
            "window": 100
        }
    }"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_flags_exit_with_usage_error() {
    let output = uavsim().arg("--no-such-flag").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_config_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let output = uavsim()
        .args(["train", "--config", "/nonexistent/config.json", "--out"])
        .arg(&out)
        .output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
    assert!(!out.exists(), "failed run must not create output files");
}

#[test]
fn grad_check_passes_on_the_default_architecture() {
    let output = uavsim().arg("grad-check").output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("max relative error"), "stdout: {stdout}");
}

#[test]
fn evaluate_zero_reward_config_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("zero.json");
    std::fs::write(
        &config_path,
        r#"{ "env": { "reward_base": 0, "weight_data": 0, "weight_energy": 0 } }"#,
    )
    .unwrap();
    let output = uavsim()
        .args(["evaluate", "--policy", "fixed:1", "--horizon", "500"])
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("avg_reward 0 "), "stdout: {stdout}");
    let csv = std::fs::read_to_string(dir.path().join("evaluate_fixed_1_seed1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "policy,seed,horizon,avg_reward,avg_throughput,avg_energy"
    );
    assert!(lines.next().unwrap().starts_with("fixed:1,1,500,0,"));
}

#[test]
fn evaluate_rejects_malformed_policies() {
    for bad in ["fixed:0", "fixed:9", "warp:1", "fixed"] {
        let output = uavsim().args(["evaluate", "--policy", bad]).output().unwrap();
        assert!(!output.status.success(), "policy {bad:?} should fail");
    }
}

#[test]
fn train_then_trace_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("results");

    let status = uavsim()
        .args(["train", "--algo", "d3ql", "--seed", "2"])
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(status.success());
    let checkpoint = out.join("d3ql_seed2.bin");
    assert!(checkpoint.exists());
    let history = std::fs::read_to_string(out.join("history_d3ql_seed2.csv")).unwrap();
    assert!(history.starts_with("step,reward,loss,epsilon,energy,cell\n"));
    assert_eq!(history.lines().count(), 801);

    let status = uavsim()
        .args(["trace", "--seed", "2", "--checkpoint"])
        .arg(&checkpoint)
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(status.success());
    let trace = std::fs::read_to_string(out.join("trace_seed2.csv")).unwrap();
    assert!(trace.starts_with("seed,slot,cell,location,energy,speed,charging\n"));
    assert_eq!(trace.lines().count(), 151);

    let policy_arg = format!("d3ql:{}", checkpoint.display());
    let status = uavsim()
        .args(["evaluate", "--seed", "2", "--policy", &policy_arg])
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(status.success());

    let status = uavsim()
        .args(["trace", "--checkpoint", "/absent/net.bin"])
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(!status.success(), "missing checkpoint must fail");
}

#[test]
fn train_qlearning_writes_a_loadable_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("results");
    let status = uavsim()
        .args(["train", "--algo", "qlearning", "--seed", "1"])
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(status.success());
    let table = out.join("qtable_seed1.csv");
    let policy_arg = format!("qlearning:{}", table.display());
    let status = uavsim()
        .args(["evaluate", "--policy", &policy_arg, "--horizon", "300"])
        .arg("--config").arg(&config)
        .arg("--out").arg(&out)
        .status().unwrap();
    assert!(status.success());
}
