//! End-to-end checks of the installed binary: subcommand wiring, exit
//! codes, and rerun reproducibility of the emitted artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

use xview::cli::RunConfig;
use xview::model::ArchConfig;
use xview::trainer::ScheduleConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xview"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("xview-bin-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::reference(dir.join("out"));
    cfg.data.num_identities = 10;
    cfg.data.views_per_id = 6;
    cfg.data.obs_dim = 12;
    cfg.arch = ArchConfig {
        obs_dim: 12,
        trunk_layers: vec![12, 12],
        shared_depth: 1,
        main_head_layers: vec![8, 6],
        wcvl_head_layers: vec![8, 6],
    };
    cfg.train_main.schedule = ScheduleConfig {
        base_lr: 1e-3,
        milestones: vec![],
        decay: 0.1,
        total_epochs: 2,
    };
    cfg.train_main.identities_per_batch = 4;
    cfg.train_main.samples_per_identity = 3;
    cfg.train_wcvl.schedule = cfg.train_main.schedule.clone();
    cfg.train_wcvl.identities_per_batch = 4;
    cfg.train_wcvl.samples_per_identity = 3;
    cfg.shared_depth_sweep = vec![1, 2];
    let path = dir.join("run.json");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn full_workflow_through_the_binary() {
    let dir = workdir("workflow");
    let cfg = small_config(&dir);

    let gen = bin()
        .args(["gen-data", "--config", cfg.to_str().unwrap(), "--csv"])
        .output()
        .unwrap();
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    for name in ["train.xvds", "query.xvds", "gallery.xvds", "manifest.json", "train.csv"] {
        assert!(dir.join("out").join(name).exists(), "{name} missing");
    }

    let main_train = bin()
        .args(["train", "--config", cfg.to_str().unwrap(), "--stage", "main"])
        .output()
        .unwrap();
    assert!(main_train.status.success());
    let stdout = String::from_utf8_lossy(&main_train.stdout);
    // One line per epoch plus the artifact line.
    assert_eq!(stdout.lines().filter(|l| l.starts_with("epoch")).count(), 2);

    let wcvl_train = bin()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--stage",
            "wcvl",
            "--mode",
            "pluggable",
        ])
        .output()
        .unwrap();
    assert!(wcvl_train.status.success());
    assert!(dir.join("out/wcvl-pluggable.xvck").exists());
    assert!(dir.join("out/main.trainlog.csv").exists());

    let eval = bin()
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--wcvl",
            dir.join("out/wcvl-pluggable.xvck").to_str().unwrap(),
            "--variant",
            "na",
            "--metric",
            "euclidean",
        ])
        .output()
        .unwrap();
    assert!(eval.status.success());
    assert!(String::from_utf8_lossy(&eval.stdout).contains("mAP"));
    assert!(dir.join("out/report-na-euclidean.json").exists());
    assert!(dir.join("out/report-na-euclidean.csv").exists());

    let dump = bin()
        .args([
            "dump-embeddings",
            "--config",
            cfg.to_str().unwrap(),
            "--wcvl",
            dir.join("out/wcvl-pluggable.xvck").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(dump.status.success());
    assert!(dir.join("out/embeddings.csv").exists());

    let ablate = bin()
        .args(["ablate", "--config", cfg.to_str().unwrap(), "--which", "mode"])
        .output()
        .unwrap();
    assert!(ablate.status.success());
    assert!(String::from_utf8_lossy(&ablate.stdout).contains("mAP difference"));
    assert!(dir.join("out/ablate-mode.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = workdir("config-error");
    // Unknown key.
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"master_seed": 1, "mystery": true}"#).unwrap();
    let out = bin()
        .args(["gen-data", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Violated generator invariant, named in the message.
    let cfg_path = small_config(&dir);
    let mut cfg = RunConfig::load(&cfg_path).unwrap();
    cfg.data.view_scale = 0.5;
    let text = serde_json::to_string(&cfg).unwrap();
    std::fs::write(&cfg_path, text).unwrap();
    let out = bin()
        .args(["gen-data", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("view_scale"));
}

#[test]
fn missing_config_exits_3() {
    let out = bin()
        .args(["gen-data", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn wcvl_without_main_checkpoint_exits_4() {
    let dir = workdir("wcvl-exit4");
    let cfg = small_config(&dir);
    bin()
        .args(["gen-data", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    let out = bin()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--stage",
            "wcvl",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn mode_flag_on_main_stage_exits_2() {
    let dir = workdir("mode-exit2");
    let cfg = small_config(&dir);
    bin()
        .args(["gen-data", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    let out = bin()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--stage",
            "main",
            "--mode",
            "end_to_end",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_reproduces_checkpoint_bytes() {
    let dir = workdir("rerun");
    let cfg = small_config(&dir);
    let run = || {
        assert!(bin()
            .args(["gen-data", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap()
            .status
            .success());
        assert!(bin()
            .args(["train", "--config", cfg.to_str().unwrap(), "--stage", "main"])
            .output()
            .unwrap()
            .status
            .success());
        std::fs::read(dir.join("out/main.xvck")).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}
