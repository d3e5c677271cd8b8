//! Drives the `tnnspk` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tnnspk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnnspk")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Small synthetic corpus with a fast training schedule.
fn corpus(dir: &Path) -> String {
    let d = dir.to_str().unwrap();
    let o = tnnspk(&["synth", "--out", d, "--speakers", "24", "--dim", "10", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = dir.join("experiment.toml");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("pool_size = 20000", "pool_size = 1000")
        .replace("pool_size = 50000", "pool_size = 1000");
    fs::write(&cfg, text + "train.task2.epochs_per_pool = 2\ntrain.task2.resample_rounds = 1\n").unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn synth_writes_partitions_and_config() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    for name in ["training.csv", "development.csv", "test.csv", "experiment.toml"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
}

#[test]
fn run_then_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let run_dir = dir.path().join("run");
    let run = tnnspk(&["run", "--config", &cfg, "--out", run_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout(&run).contains("task1.eer = "));
    assert!(stdout(&run).contains("task2.confusions = "));
    assert!(String::from_utf8_lossy(&run.stderr).contains("mean_loss"));
    assert!(run_dir.join("report.txt").is_file());
    assert!(!run_dir.join("INCOMPLETE").exists());

    let eval_dir = dir.path().join("eval");
    let eval = tnnspk(&[
        "eval",
        "--config",
        &cfg,
        "--models",
        run_dir.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    assert_eq!(stdout(&eval), stdout(&run));
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let out = dir.path().join("b");
    let o = tnnspk(&["train", "--config", &cfg, "--seed", "17", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("task2.final_mean_loss"));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("train.seed = 17"), "{resolved}");
    assert!(out.join("model.task1.ckpt").is_file());
}

#[test]
fn baseline_and_split_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let a = tnnspk(&["baseline", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    let b = tnnspk(&["baseline", "--config", &cfg, "--split", "SetB", "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    let report = fs::read_to_string(dir.path().join("b/report.txt")).unwrap();
    assert!(report.contains("split = SetB"), "{report}");
    assert!(report.contains("mode = baseline"));
}

#[test]
fn project_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let out = dir.path().join("p");
    let o = tnnspk(&["project", "--config", &cfg, "--out", out.to_str().unwrap(), "--source", "train"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("projection.raw.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("utterance,speaker,blacklisted,pc1,pc2"));
    assert_eq!(csv.lines().count(), 1 + 24 * 3);

    let conv = dir.path().join("conv");
    let o = tnnspk(&["ingest", "--config", &cfg, "--out", conv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("training: 72 vectors"));
    assert_eq!(
        fs::read_to_string(conv.join("training.csv")).unwrap(),
        fs::read_to_string(dir.path().join("training.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tnnspk(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()])), 1);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "train.no_such_key = 3\n").unwrap();
    let o = tnnspk(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown config key"));
    assert_eq!(code(&tnnspk(&["run", "--bogus-flag"])), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    fs::write(dir.path().join("training.csv"), "u1,bl_1,1,0.5\n").unwrap();
    let out = dir.path().join("o");
    let o = tnnspk(&["baseline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("INCOMPLETE").is_file());
}

#[test]
fn divergent_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = corpus(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("learning_rate = 0.001", "learning_rate = 1e300");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    let o = tnnspk(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    assert!(out.join("INCOMPLETE").is_file());
}
