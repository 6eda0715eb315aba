//! End-to-end runs of the `dsvm` binary on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dsvm")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dsvm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn dsvm")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &[&str] = &[
    "--set",
    "model.base_dim=8",
    "--set",
    "model.input_size=32",
    "--set",
    "model.state_dim=4",
    "--set",
    "train.epochs=1",
    "--set",
    "train.batch_size=4",
];

fn synth(dir: &Path, n: usize, n_val: usize, size: usize, classes: usize) {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "0",
        "--n",
        &n.to_string(),
        "--n-val",
        &n_val.to_string(),
        "--size",
        &size.to_string(),
        "--classes",
        &classes.to_string(),
    ]);
    assert_ok(&out);
}

#[test]
fn synth_is_idempotent_and_guards_overwrites() {
    let dir = tmp("synth");
    let data = dir.join("data");
    synth(&data, 4, 2, 32, 2);
    let first = fs::read(data.join("train/images/0002.png")).unwrap();
    // without --force a non-empty target is refused
    let out = run(&["synth", "--out", data.to_str().unwrap(), "--n", "4", "--size", "32"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    // with --force the regeneration is byte-identical
    let out = run(&[
        "synth", "--out", data.to_str().unwrap(), "--seed", "0", "--n", "4", "--n-val", "2",
        "--size", "32", "--classes", "2", "--force",
    ]);
    assert_ok(&out);
    let second = fs::read(data.join("train/images/0002.png")).unwrap();
    assert_eq!(first, second);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_eval_predict_roundtrip() {
    let dir = tmp("tep");
    let data = dir.join("data");
    synth(&data, 8, 4, 32, 2);
    let train_out = dir.join("train");
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", train_out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    for artifact in ["config.txt", "train_log.csv", "summary.json", "best.ckpt", "last.ckpt"] {
        assert!(train_out.join(artifact).exists(), "missing {artifact}");
    }
    let log = fs::read_to_string(train_out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,epoch,lr,l_seg,l_proj,l_prog,l_total"));
    assert_eq!(log.lines().count(), 3); // header + 2 steps

    let eval_out = dir.join("eval");
    let ckpt = train_out.join("best.ckpt");
    assert_ok(&run(&[
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "val", "--out", eval_out.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("id,miou,dsc,acc,spe,sen,hd95"));
    assert!(csv.lines().any(|l| l.starts_with("mean,")));
    assert!(eval_out.join("metrics.json").exists());

    let pred_out = dir.join("pred");
    assert_ok(&run(&[
        "predict", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "val", "--out", pred_out.to_str().unwrap(),
    ]));
    assert!(pred_out.join("masks/0000.png").exists());
    assert!(pred_out.join("overlays/0000.png").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_is_deterministic_across_invocations() {
    let dir = tmp("det");
    let data = dir.join("data");
    synth(&data, 8, 4, 32, 2);
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"];
        args.extend_from_slice(TINY);
        assert_ok(&run(&args));
    }
    let la = fs::read_to_string(a.join("train_log.csv")).unwrap();
    let lb = fs::read_to_string(b.join("train_log.csv")).unwrap();
    assert_eq!(la, lb, "identical seed and config must give identical logs");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_is_a_hard_error() {
    let dir = tmp("badkey");
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "train.epochs = 1\nmodel.bogus_knob = 3\n").unwrap();
    let out = run(&["train", "--data", "/nonexistent", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus_knob"), "error names the key: {err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_layering_with_flag_override() {
    let dir = tmp("layer");
    let data = dir.join("data");
    synth(&data, 4, 2, 32, 2);
    let cfg = dir.join("desk.cfg");
    fs::write(
        &cfg,
        "model.base_dim = 8\nmodel.input_size = 32\nmodel.state_dim = 4\ntrain.epochs = 3\ntrain.batch_size = 4\n",
    )
    .unwrap();
    let out_dir = dir.join("train");
    // --epochs flag overrides the file value
    assert_ok(&run(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--epochs", "1", "--out", out_dir.to_str().unwrap(),
    ]));
    let snapshot = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(snapshot.contains("train.epochs = 1"));
    assert!(snapshot.contains("model.base_dim = 8"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn multiclass_path_reports_per_class() {
    let dir = tmp("multi");
    let data = dir.join("data");
    synth(&data, 6, 3, 32, 4);
    let train_out = dir.join("train");
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", train_out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    let eval_out = dir.join("eval");
    assert_ok(&run(&[
        "eval", "--checkpoint", train_out.join("best.ckpt").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--out", eval_out.to_str().unwrap(),
    ]));
    let json = fs::read_to_string(eval_out.join("metrics.json")).unwrap();
    assert!(json.contains("per_class"));
    // K=4: three foreground classes in the aggregate table
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let pcs = parsed["mean"]["per_class"].as_array().unwrap();
    assert_eq!(pcs.len(), 3);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn ablate_emits_four_rows() {
    let dir = tmp("ablate");
    let data = dir.join("data");
    synth(&data, 4, 2, 32, 2);
    let out_dir = dir.join("ablation");
    let mut args = vec![
        "ablate", "--data", data.to_str().unwrap(), "--seeds", "0",
        "--out", out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    let csv = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("config,alpha,beta,miou,dsc,acc,spe,sen,avg"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn complexity_presets() {
    let dir = tmp("complexity");
    let out = run(&["complexity", "--preset", "paper", "--out", dir.to_str().unwrap()]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("27.4"), "paper preset parameter count: {text}");
    assert!(dir.join("complexity.json").exists());
    let bad = run(&["complexity", "--preset", "warehouse"]);
    assert!(!bad.status.success());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_checkpoint_is_a_clean_error() {
    let out = run(&["eval", "--checkpoint", "/nonexistent.ckpt", "--data", "/tmp"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_subcommands() {
    let out = run(&["--help"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "train", "eval", "predict", "ablate", "complexity"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
    let out = run(&["train", "--help"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("--config") && text.contains("--set") && text.contains("--resume"));
}
