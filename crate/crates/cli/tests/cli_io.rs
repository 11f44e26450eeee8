//! File-level behavior of the experiment driver: outputs, determinism across
//! thread counts, dataset errors, plot emission.

use std::fs;

use mfld::config::{parse_config, RawConfig, typed_config};
use mfld::experiment::{run_experiment, load_data_text};
use mfld::presets;

const TINY: &str = "\
[model]
kind = linear_quadratic
dim = 2
curvature = 1.0

[dynamics]
lambda = 0.5
eta = 0.05
steps = 400
n_particles = 64
seed = 9

[output]
log_every = 100
plot_columns = step,energy
";

#[test]
fn run_writes_three_files_with_expected_row_counts() {
    let cfg = parse_config(TINY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&cfg, None, None, Some(1), Some(dir.path()), None).unwrap();
    let trace = fs::read_to_string(result.out_dir.join("trace.csv")).unwrap();
    // steps/log_every + 1 records, plus the header
    assert_eq!(trace.lines().count(), 400 / 100 + 1 + 1);
    let positions = fs::read_to_string(result.out_dir.join("final_positions.csv")).unwrap();
    assert_eq!(positions.lines().count(), 64 + 1);
    assert!(positions.starts_with("x0,x1\n"));
    let meta = fs::read_to_string(result.out_dir.join("meta.txt")).unwrap();
    assert!(meta.contains("[config]"));
    assert!(meta.contains("[theory]"));
    assert!(meta.contains("moment_bound"));
    // plot_columns emitted one (step, value) series per requested diagnostic
    assert!(result.out_dir.join("plot_step.dat").exists());
    let series = fs::read_to_string(result.out_dir.join("plot_energy.dat")).unwrap();
    assert!(series.starts_with("# step energy\n"));
    assert_eq!(series.lines().count(), 400 / 100 + 1 + 1);
    assert_eq!(series.lines().nth(1).unwrap().split_whitespace().count(), 2);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let cfg = parse_config(TINY).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_experiment(&cfg, None, None, Some(1), Some(d1.path()), None).unwrap();
    run_experiment(&cfg, None, None, Some(4), Some(d2.path()), None).unwrap();
    let a = fs::read(d1.path().join("trace.csv")).unwrap();
    let b = fs::read(d2.path().join("trace.csv")).unwrap();
    assert_eq!(a, b);
    let a = fs::read(d1.path().join("final_positions.csv")).unwrap();
    let b = fs::read(d2.path().join("final_positions.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_override_changes_the_trajectory() {
    let cfg = parse_config(TINY).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_experiment(&cfg, None, None, Some(1), Some(d1.path()), Some(9)).unwrap();
    run_experiment(&cfg, None, None, Some(1), Some(d2.path()), Some(10)).unwrap();
    let a = fs::read(d1.path().join("trace.csv")).unwrap();
    let b = fs::read(d2.path().join("trace.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn missing_dataset_file_names_the_path() {
    let text = "\
[model]
kind = mmd
data_file = does-not-exist.txt
kernel_bandwidth = 1.0

[dynamics]
lambda = 0.1
eta = 0.05
steps = 10
n_particles = 8
";
    let cfg = parse_config(text).unwrap();
    let err = match run_experiment(&cfg, None, None, Some(1), None, None) {
        Err(e) => e,
        Ok(_) => panic!("missing dataset should fail"),
    };
    assert!(format!("{err:#}").contains("does-not-exist.txt"), "{err:#}");
}

#[test]
fn preset_data_files_load_and_parse() {
    let text = load_data_text("data/mmd-1d.txt", None).unwrap();
    let ds = mfld_core::models::parse_dataset(&text, false).unwrap();
    assert_eq!(ds.n, 400);
    assert_eq!(ds.dim, 1);
    let text = load_data_text("data/nn-xor.txt", None).unwrap();
    let ds = mfld_core::models::parse_dataset(&text, true).unwrap();
    assert_eq!(ds.n, 4);
    assert_eq!(ds.labels.unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn preset_overrides_flow_into_the_run() {
    let preset = presets::find("gaussian-ld").unwrap();
    let mut raw = RawConfig::parse(preset.config).unwrap();
    raw.apply_override("steps=200").unwrap();
    raw.apply_override("n_particles=32").unwrap();
    let cfg = typed_config(&raw).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result =
        run_experiment(&cfg, None, Some("gaussian-ld"), Some(1), Some(dir.path()), None).unwrap();
    assert_eq!(result.output.final_ensemble.step(), 200);
    assert_eq!(result.output.final_ensemble.n_particles(), 32);
    let meta = fs::read_to_string(result.out_dir.join("meta.txt")).unwrap();
    assert!(meta.contains("preset = gaussian-ld"));
}
