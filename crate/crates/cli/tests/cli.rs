//! End-to-end CLI checks: artifacts, exit codes, overrides, dependencies.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_keytrack")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("keytrack-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// Tiny-but-real training settings shared by the smoke commands.
fn smoke_args<'a>(out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--set",
        "train.n_envs=4",
        "--set",
        "train.n_steps=8",
        "--set",
        "train.iterations_stage1=2",
        "--set",
        "train.iterations_stage2=2",
        "--set",
        "train.policy_hidden=[16]",
        "--set",
        "train.critic_hidden=[16]",
        "--set",
        "train.adapter_hidden=[8]",
        "--set",
        "train.ppo.minibatches=2",
        "--set",
        "train.ppo.epochs=2",
        "--set",
        "train.n_workers=2",
        "--seed",
        "5",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.push(out.to_str().unwrap().to_string());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn gen_motion_writes_artifacts() {
    let dir = tmp("gen");
    let out = run(&["gen-motion", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("motion.json").exists());
    assert!(dir.join("config.toml").exists());
    let text = std::fs::read_to_string(dir.join("motion.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["morphology_id"], "biped6");
}

#[test]
fn edit_materializes_grid() {
    let dir = tmp("edit");
    let out = run(&["edit", "--grid", "5", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("edits.json")).unwrap()).unwrap();
    assert_eq!(v["edits"].as_array().unwrap().len(), 5);
    assert!(dir.join("rule_motion.json").exists());
    // Config hash is embedded in the artifact.
    assert!(v["config_hash"].as_str().unwrap().len() == 12);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tmp("badcfg");
    let mut args = vec!["train-stage1".to_string()];
    args.extend(smoke_args(&dir, &["--set", "train.ppo.gae_lambda=1.5"]));
    let out = Command::new(bin()).args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gae_lambda"), "stderr: {err}");
}

#[test]
fn unknown_override_path_exits_2() {
    let dir = tmp("badpath");
    let out = run(&["gen-motion", "--set", "nope.nope=1", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage2_without_base_checkpoint_exits_3() {
    let dir = tmp("nostage1");
    let mut args = vec!["train-stage2".to_string(), "--base".into(), "/nonexistent/stage1.ckpt".into()];
    args.extend(smoke_args(&dir, &[]));
    let out = Command::new(bin()).args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not found"), "stderr: {err}");
}

#[test]
fn full_pipeline_train_eval_compare() {
    let s1 = tmp("pipe-s1");
    let mut args = vec!["train-stage1".to_string()];
    args.extend(smoke_args(&s1, &["--preset", "stage1_only"]));
    let out = Command::new(bin()).args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt1 = s1.join("stage1.ckpt");
    assert!(ckpt1.exists());
    assert!(s1.join("metrics.jsonl").exists());

    // The persisted config echoes the overrides.
    let cfg_text = std::fs::read_to_string(s1.join("config.toml")).unwrap();
    let cfg: toml::Value = toml::from_str(&cfg_text).unwrap();
    assert_eq!(cfg["train"]["n_envs"].as_integer(), Some(4));

    let s2 = tmp("pipe-s2");
    let mut args = vec![
        "train-stage2".to_string(),
        "--base".into(),
        ckpt1.to_str().unwrap().into(),
    ];
    args.extend(smoke_args(&s2, &["--preset", "two_stage"]));
    let out = Command::new(bin()).args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt2 = s2.join("stage2.ckpt");

    // Eval with the hard band only.
    let ev = tmp("pipe-eval");
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt2.to_str().unwrap(),
        "--band",
        "hard",
        "--set",
        "eval.episodes_per_psi=1",
        "--set",
        "eval.psi_grid_easy=2",
        "--set",
        "eval.psi_grid_hard=1",
        "--set",
        "eval.seeds=[7]",
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    // Hard band only: the easy grid is empty.
    assert_eq!(report["report"]["psi_easy"].as_array().unwrap().len(), 0);
    assert!(!report["report"]["psi_hard"].as_array().unwrap().is_empty());
    assert!(ev.join("episodes.jsonl").exists());

    // Compare the two checkpoints: a Table-shaped CSV plus plots.
    let cmp = tmp("pipe-cmp");
    let out = run(&[
        "compare",
        "--method",
        &format!("stage1={}", ckpt1.to_str().unwrap()),
        "--method",
        &format!("two_stage={}", ckpt2.to_str().unwrap()),
        "--set",
        "eval.episodes_per_psi=1",
        "--set",
        "eval.psi_grid_easy=2",
        "--set",
        "eval.psi_grid_hard=1",
        "--set",
        "eval.seeds=[7]",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(cmp.join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3, "one header + 3 bands x 2 methods");
    assert!(lines[0].starts_with("method,band,success"));
    assert!(lines[1].starts_with("stage1,easy,"));
    assert!(cmp.join("error_vs_psi.svg").exists());
    assert!(cmp.join("phase_trace.svg").exists());
}

#[test]
fn eval_missing_checkpoint_exits_3() {
    let dir = tmp("nockpt");
    let out = run(&["eval", "--ckpt", "/nonexistent.ckpt", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
