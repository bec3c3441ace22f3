//! End-to-end checks of the `ladder` binary: artifacts, determinism at the
//! process level, config-file precedence, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ladder-cli-test-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ladder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ladder"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const TINY: &str = r#"{
    "arch": [784, 32, 10],
    "epochs_flat": 1,
    "epochs_decay": 1,
    "seeds": [0],
    "labels": 100
}"#;

#[test]
fn train_writes_checkpoint_log_and_summary() {
    let dir = scratch("train");
    let cfg = write_config(&dir, TINY);
    let data = mnist_dir();
    let out = ladder(&[
        "train",
        "--variant",
        "vanilla",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("runs").to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let run = dir.join("runs/desk-vanilla-100");
    let log = std::fs::read_to_string(run.join("seed0.steps.csv")).unwrap();
    assert!(log.starts_with("step,epoch,lr,total,ce,ce_clamped,recon0"), "log header: {}", &log[..60]);
    assert_eq!(log.lines().count(), 1 + 2 * 500, "one header plus two epochs of steps");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("seed0.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["variant"], "vanilla");
    assert_eq!(summary["config"]["labels"], 100);
    assert_eq!(summary["report"]["steps"], 1000);
    let hash = summary["code_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let err = summary["report"]["test_error_pct"].as_f64().unwrap();
    assert!(err > 0.0 && err < 90.0, "implausible test error {err}");

    let model = ladder::model::load_checkpoint::<f64>(&run.join("seed0.checkpoint.json.gz"))
        .expect("checkpoint loads");
    assert_eq!(model.spec.layer_sizes, vec![784, 32, 10]);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_invocations_write_identical_logs() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, TINY);
    let data = mnist_dir();
    let mut logs = Vec::new();
    for round in 0..2 {
        let out_dir = dir.join(format!("round{round}"));
        let out = ladder(&[
            "train",
            "--variant",
            "gatedgauss",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--data-dir",
            data.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        logs.push(
            std::fs::read(out_dir.join("desk-gatedgauss-100/seed0.steps.csv")).unwrap(),
        );
    }
    assert_eq!(logs[0], logs[1], "two runs of one config must log identically");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_beats_flags_at_the_process_level() {
    let dir = scratch("precedence");
    let cfg = write_config(&dir, TINY);
    let data = mnist_dir();
    // The file pins labels=100; the flag asks for 1000 and must lose.
    let out = ladder(&[
        "train",
        "--variant",
        "baseline",
        "--labels",
        "1000",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("runs").to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("runs/desk-baseline-100/seed0.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["config"]["labels"], 100);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_distinguish_error_classes() {
    // Unknown variant: configuration error, and the message lists the names.
    let out = ladder(&["train", "--variant", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("vanilla") && msg.contains("amlp[2,2,2]"), "listing: {msg}");

    // Missing data: data error.
    let out = ladder(&["data", "--data-dir", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(3));

    // Bad label count: configuration error.
    let out = ladder(&["train", "--labels", "123"]);
    assert_eq!(out.status.code(), Some(2));

    // Table with grid keys in the file: configuration error.
    let dir = scratch("exitcodes");
    let cfg = write_config(&dir, r#"{"variant": "vanilla"}"#);
    let out = ladder(&["table", "--variants", "vanilla", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();

    // Success path.
    let out = ladder(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
