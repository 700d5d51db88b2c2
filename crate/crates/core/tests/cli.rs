use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geomag_nav::talstm::load_model;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geomag-nav"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

const TINY_TRAINING: &str = r#"{
  "model": {"hidden": 4},
  "training": {"epochs": 2, "batch_size": 2, "optimizer": "adam"},
  "data": {"missions": 4}
}"#;

#[test]
fn gradcheck_passes_fails_on_corruption_and_repeats() {
    let a = run(&["gradcheck"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(stdout(&a).contains("max relative error"));
    let b = run(&["gradcheck"]);
    assert_eq!(stdout(&a), stdout(&b));
    let c = run(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(c.status.code(), Some(1));
}

#[test]
fn analytic_runs_report_outcome_through_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clean");
    let o = run(&[
        "run",
        "--config",
        scenarios().join("default.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--svg",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.csv", "convergence.csv", "convergence.svg", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let anomaly = std::fs::read_to_string(scenarios().join("anomaly.json"))
        .unwrap()
        .replace("\"calibrated\"", "\"analytic\"");
    let cfg = write_scenario(dir.path(), "anomaly-analytic.json", &anomaly);
    let out = dir.path().join("anomaly");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let rows = std::fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 302, "header plus 301 records");
}

#[test]
fn missing_model_is_an_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "c.json", r#"{"policy": {"kind": "calibrated"}}"#);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("requires a trained model"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn invalid_configs_never_write() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_scenario(dir.path(), "bad.json", r#"{"mission": {"eps": 0}}"#);
    for cmd in ["run", "suite", "train"] {
        let o = run(&[cmd, "--config", &bad, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(!out.exists(), "{cmd} wrote output");
    }
    let o = run(&["run", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"));

    let zero = write_scenario(dir.path(), "zero.json", r#"{"training": {"epochs": 0}}"#);
    let o = run(&["train", "--config", &zero, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no training performed"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = run(&["frobnicate"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn training_is_reproducible_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "t.json", TINY_TRAINING);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ma = std::fs::read(a.join("model.talstm")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("model.talstm")).unwrap());
    assert_ne!(ma, std::fs::read(c.join("model.talstm")).unwrap());
    assert_eq!(
        std::fs::read(a.join("training_loss.csv")).unwrap(),
        std::fs::read(b.join("training_loss.csv")).unwrap()
    );
    let m = load_model(&a.join("model.talstm"), Some(20)).unwrap();
    assert!(m.is_trained());
    let loss = std::fs::read_to_string(a.join("training_loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(loss.lines().count(), 3);
}

#[test]
fn suite_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("default.json");
    let mut outs = Vec::new();
    for name in ["s1", "s2"] {
        let out = dir.path().join(name);
        let o = run(&[
            "suite",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--repetitions",
            "3",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("runs: 3 (success 3, aborted 0)"), "{}", stdout(&o));
        outs.push(out);
    }
    for f in ["suite_runs.csv", "suite_aggregate.csv", "convergence_run_002.csv"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap());
    }
}

#[test]
fn fieldinfo_describes_the_world() {
    let o = run(&[
        "fieldinfo",
        "--config",
        scenarios().join("anomaly.json").to_str().unwrap(),
        "--at",
        "21.5,134.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("base: dipole"));
    assert!(s.contains("anomaly 1"));
    assert!(s.contains("destination 1"));
    assert!(s.contains("query"));
}
