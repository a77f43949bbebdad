use std::path::Path;
use std::process::Command;

use rashomon_cli::pipeline::{self, TrainingReport};
use rashomon_cli::{CliError, ExperimentConfig};

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(
        "width = 3\nheight = 3\nnum_jobs = 2\nfuel_capacity = 8\nseeds = 3\nhidden = 8,8\nepochs = 40\nshift_jobs = 2..3\n",
    )
    .unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn training(dir: &Path) -> TrainingReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join(pipeline::TRAINING_FILE)).unwrap()).unwrap()
}

#[test]
fn downstream_stages_require_upstream_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for err in [
        pipeline::cmd_synthesize(&cfg).unwrap_err(),
        pipeline::cmd_train(&cfg).unwrap_err(),
        pipeline::cmd_verify(&cfg).unwrap_err(),
    ] {
        assert!(matches!(err, CliError::MissingArtifact { stage: "build", .. }), "{err}");
    }
    assert!(matches!(pipeline::cmd_rashomon(&cfg).unwrap_err(), CliError::MissingArtifact { stage: "attribute", .. }));
    assert!(matches!(pipeline::cmd_shift(&cfg).unwrap_err(), CliError::MissingArtifact { stage: "rashomon", .. }));
    pipeline::cmd_build(&cfg).unwrap();
    assert!(matches!(pipeline::cmd_train(&cfg).unwrap_err(), CliError::MissingArtifact { stage: "synthesize", .. }));
}

#[test]
fn stages_run_one_at_a_time_and_train_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline::cmd_build(&cfg).unwrap();
    pipeline::cmd_synthesize(&cfg).unwrap();
    let first = pipeline::cmd_train(&cfg).unwrap();
    assert_eq!(first.outputs.len(), cfg.seeds.len() + 1);
    let before = training(dir.path());
    pipeline::cmd_train(&cfg).unwrap();
    let after = training(dir.path());
    assert_eq!(before, after);
    assert!(before.policies.iter().all(|p| p.checksum.len() == 32));

    pipeline::cmd_verify(&cfg).unwrap();
    pipeline::cmd_attribute(&cfg).unwrap();
    pipeline::cmd_rashomon(&cfg).unwrap();
    let shift = pipeline::cmd_shift(&cfg).unwrap();
    assert_eq!(shift.outputs, vec![pipeline::SHIFT_CSV, pipeline::SHIFT_JSON]);
    let verify = std::fs::read_to_string(dir.path().join(pipeline::VERIFY_CSV)).unwrap();
    assert_eq!(verify.lines().count(), cfg.seeds.len() + 1);
}

#[test]
fn manifest_lists_six_existing_stage_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let manifest = pipeline::cmd_all(&cfg).unwrap();
    let names: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["build", "synthesize", "train", "verify", "rashomon", "shift"]);
    assert_eq!(manifest.config_checksum, cfg.checksum());
    for stage in &manifest.stages {
        assert!(!stage.outputs.is_empty());
        for f in &stage.outputs {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(pipeline::MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk["stages"].as_array().unwrap().len(), 6);
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rashomon"))
        .args(["verify", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["status"], "error");
    assert_eq!(record["kind"], "missing_artifact");

    let out = Command::new(env!("CARGO_BIN_EXE_rashomon"))
        .args(["build", "--jobs", "6..4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["kind"], "config");

    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "width = 3\nheight = 3\nnum_jobs = 1\nfuel_capacity = 6\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rashomon"))
        .args(["build", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .args(["--cap", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let out = Command::new(env!("CARGO_BIN_EXE_rashomon"))
        .args(["build", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join(pipeline::MODEL_FILE).is_file());
}
