use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ne_sgd::data::{encode_idx_images, encode_idx_labels, IdxImages};
use ne_sgd::harness::output::{
    mask_wall_time, read_generations, BASELINE_MANIFEST_JSON, BASELINE_RUNS_CSV, BASELINE_SUMMARY_CSV,
    BEST_CHECKPOINT, BEST_JSON, GENERATIONS_CSV, MANIFEST_JSON, REPORT_SVG, REPORT_TXT,
};
use ne_sgd::nn::load_checkpoint;

fn preset() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/desk.preset");
    std::fs::read_to_string(path).unwrap()
}

/// The desk preset shortened so each invocation finishes quickly.
fn small_config() -> String {
    preset()
        .replace("epochs_alpha = 200", "epochs_alpha = 20")
        .replace("epochs_beta = 50", "epochs_beta = 5")
        .replace("generations = 10", "generations = 3")
        .replace("repeats = 20", "repeats = 4")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn ne_sgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ne-sgd"))
        .args(args)
        .env_remove("NE_SGD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_in(dir: &Path, config: &Path, out: &str) -> PathBuf {
    let out_dir = dir.join(out);
    let result = ne_sgd(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(result.status.success(), "{}", stderr(&result));
    out_dir
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = run_in(dir.path(), &config, "run");
    for name in [MANIFEST_JSON, GENERATIONS_CSV, BEST_JSON, BEST_CHECKPOINT] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_JSON)).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let rows = read_generations(&out.join(GENERATIONS_CSV)).unwrap();
    assert_eq!(rows.len(), 3);
    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(BEST_JSON)).unwrap()).unwrap();
    assert_eq!(best["genome"].as_str().unwrap(), rows[2].best_genome);
    assert_eq!(load_checkpoint(out.join(BEST_CHECKPOINT)).unwrap().block_count(), 6);
}

#[test]
fn reruns_match_and_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let a = run_in(dir.path(), &config, "a");
    let b = run_in(dir.path(), &config, "b");
    let text = |d: &Path| mask_wall_time(&std::fs::read_to_string(d.join(GENERATIONS_CSV)).unwrap());
    assert_eq!(text(&a), text(&b));

    let c = dir.path().join("c");
    let out = Command::new(env!("CARGO_BIN_EXE_ne-sgd"))
        .args(["run", "--config", config.to_str().unwrap(), "--out", c.to_str().unwrap()])
        .env("NE_SGD_SEED", "7")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c.join(MANIFEST_JSON)).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn missing_learning_rate_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config().replace("lr_reinit = 0.01\n", ""));
    let out = ne_sgd(&["run", "--config", config.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lr_reinit"), "{}", stderr(&out));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn retained_rate_must_be_below_reinit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config().replace("lr_retained = 0.001", "lr_retained = 0.01"));
    let out = ne_sgd(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lr_retained - lr_reinit < 0"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_and_missing_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config().replace("[model]", "[model]\ndropout = 0.5"));
    let out = ne_sgd(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dropout"), "{}", stderr(&out));

    let out = ne_sgd(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baseline_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("baseline");
    let out = ne_sgd(&[
        "baseline",
        "--config",
        config.to_str().unwrap(),
        "--repeats",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in [BASELINE_MANIFEST_JSON, BASELINE_RUNS_CSV, BASELINE_SUMMARY_CSV] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let runs = std::fs::read_to_string(out_dir.join(BASELINE_RUNS_CSV)).unwrap();
    assert_eq!(runs.lines().count(), 4);
}

#[test]
fn report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = run_in(dir.path(), &config, "run");
    let render = || {
        let out = ne_sgd(&["report", "--dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read(out_dir.join(REPORT_SVG)).unwrap(),
            std::fs::read(out_dir.join(REPORT_TXT)).unwrap(),
        )
    };
    let first = render();
    let second = render();
    assert_eq!(first, second);
    assert!(String::from_utf8(first.0).unwrap().starts_with("<svg"));

    let out = ne_sgd(&["report", "--dir", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn idx_dataset_paths_resolve_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let (count, side) = (60usize, 3usize);
    let labels: Vec<u8> = (0..count).map(|i| (i % 2) as u8).collect();
    let pixels: Vec<u8> = labels
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| (0..side * side).map(move |p| if (p % 2) as u8 == l { 200 } else { (i * 7 % 40) as u8 }))
        .collect();
    std::fs::write(
        data.join("images.idx"),
        encode_idx_images(&IdxImages { count, rows: side, cols: side, pixels }),
    )
    .unwrap();
    std::fs::write(data.join("labels.idx"), encode_idx_labels(&labels)).unwrap();

    let text = small_config()
        .replace(
            "kind = \"two_moons\"\nsamples = 400\nnoise = 0.25",
            "kind = \"idx\"\nimages = \"data/images.idx\"\nlabels = \"data/labels.idx\"",
        )
        .replace("layers = [2, 32, 32, 2]", "layers = [9, 8, 2]");
    let config = write_config(dir.path(), &text);
    let out_dir = run_in(dir.path(), &config, "idx-run");
    let rows = read_generations(&out_dir.join(GENERATIONS_CSV)).unwrap();
    assert_eq!(rows[0].best_genome.len(), 4);
}
