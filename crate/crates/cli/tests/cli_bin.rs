//! End-to-end checks of the installed binary surface: subcommands, flags,
//! and exit codes.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfld"))
}

const TINY: &str = "\
[model]
kind = linear_quadratic
dim = 2
curvature = 1.0
reg_weight = 0.5

[dynamics]
lambda = 0.5
eta = 0.05
steps = 200
n_particles = 32
seed = 4

[output]
log_every = 100
";

#[test]
fn run_subcommand_writes_outputs_and_honors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    fs::write(&cfg_path, TINY).unwrap();
    let out_dir = dir.path().join("results");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "11", "--threads", "1", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("trace.csv").exists());
    assert!(out_dir.join("final_positions.csv").exists());
    let meta = fs::read_to_string(out_dir.join("meta.txt")).unwrap();
    assert!(meta.contains("seed = 11"));
    assert!(meta.contains("threads = 1"));
}

#[test]
fn run_subcommand_fails_cleanly_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    fs::write(&cfg_path, TINY.replace("lambda = 0.5", "lambda = oops")).unwrap();
    let output = bin().args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(!output.status.success());
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("lambda"), "{msg}");
}

#[test]
fn bounds_subcommand_prints_constants_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    fs::write(&cfg_path, TINY).unwrap();
    let output = bin().args(["bounds", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for needle in ["[lsi]", "alpha_lower", "[theory]", "rbar_sq", "moment_bound"] {
        assert!(text.contains(needle), "missing `{needle}` in:\n{text}");
    }
    // nothing was executed or written
    assert!(!dir.path().join("out").exists());
}

#[test]
fn preset_list_names_all_presets() {
    let output = bin().args(["preset", "list"]).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for name in ["gaussian-ld", "nn-xor", "mmd-1d", "ksd-gauss", "svrg-sum"] {
        assert!(text.contains(name), "missing preset {name}");
    }
}

#[test]
fn preset_subcommand_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["preset", "gaussian-ld", "steps=100", "n_particles=16", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3); // header + steps 0, 100
    let positions = fs::read_to_string(dir.path().join("final_positions.csv")).unwrap();
    assert_eq!(positions.lines().count(), 17);
}

#[test]
fn mfld_threads_env_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    fs::write(&cfg_path, TINY).unwrap();
    let out_dir = dir.path().join("results");
    let status = bin()
        .env("MFLD_THREADS", "3")
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let meta = fs::read_to_string(out_dir.join("meta.txt")).unwrap();
    assert!(meta.contains("threads = 3"), "{meta}");
}
