//! Orchestration behind the `ne-sgd` command line: evolutionary runs, plain
//! SGD baselines and reports. Workers only compute; every file is written here.

mod config;
pub mod output;
mod report;

pub use config::{BaselineConfig, DatasetConfig, DatasetKind, ExperimentConfig, ModelConfig, OutputConfig, SEED_ENV};
pub use report::{render_report, report, ReportSummary};

use std::path::{Path, PathBuf};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::evolution::{run, RunOutcome, RunSpec};
use crate::exec::Executor;
use crate::nn::{build_model, save_checkpoint, sgd_train, Model};
use crate::seed::{derive_rng, derive_seed, Purpose};
use crate::stats::{summarize, Summary};
use output::*;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub outcome: RunOutcome,
    pub test_accuracy: f64,
    pub manifest: Manifest,
}

/// Runs the evolutionary search and writes the manifest, generation CSV,
/// best-individual JSON and best-weights checkpoint into `out_dir`.
///
/// The manifest is written with status `running` before training starts and
/// generation rows are flushed as they complete, so a failed run leaves its
/// partial log behind.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, parallel: usize) -> Result<RunArtifacts> {
    config.validate()?;
    ensure_dir(out_dir)?;
    let architecture = config.architecture()?;
    let data = config.build_dataset()?;

    let manifest_path = out_dir.join(MANIFEST_JSON);
    let mut manifest = Manifest::start("run", config.hash(), config.seed);
    manifest.files = vec![MANIFEST_JSON.to_string(), GENERATIONS_CSV.to_string()];
    write_json(&manifest_path, &manifest)?;

    let mut csv = GenerationCsv::create(out_dir.join(GENERATIONS_CSV))?;
    let spec = RunSpec {
        evolution: config.evolution.clone(),
        train: config.train.clone(),
        seed: config.seed,
        parallelism: parallel,
    };
    let outcome = match run(&spec, &data, &architecture, |log| csv.append(log)) {
        Ok(outcome) => outcome,
        Err(e) => {
            manifest.finish(RunStatus::Failed);
            manifest.record("error", e.to_string());
            write_json(&manifest_path, &manifest)?;
            return Err(e);
        }
    };

    write_json(&out_dir.join(BEST_JSON), &BestRecord::from_individual(&outcome.best))?;
    save_checkpoint(out_dir.join(BEST_CHECKPOINT), &outcome.best_snapshot)
        .map_err(|e| Error::data(format!("{}: {e}", out_dir.join(BEST_CHECKPOINT).display())))?;

    let mut model = build_model(&architecture, 0);
    model.restore(&outcome.best_snapshot)?;
    let test_accuracy = model.evaluate_accuracy(&data.samples(Split::Test))?;
    let mut base = build_model(&architecture, 0);
    base.restore(&outcome.base_snapshot)?;
    let base_test_accuracy = base.evaluate_accuracy(&data.samples(Split::Test))?;

    manifest.files.extend([BEST_JSON.to_string(), BEST_CHECKPOINT.to_string()]);
    manifest.record("base_validation_accuracy", outcome.base_validation_accuracy);
    manifest.record("base_test_accuracy", base_test_accuracy);
    manifest.record("best_validation_accuracy", outcome.best.raw_fitness.unwrap_or(0.0));
    manifest.record("best_test_accuracy", test_accuracy);
    manifest.finish(RunStatus::Complete);
    write_json(&manifest_path, &manifest)?;

    Ok(RunArtifacts {
        dir: out_dir.to_path_buf(),
        outcome,
        test_accuracy,
        manifest,
    })
}

pub struct BaselineArtifacts {
    pub runs: Vec<BaselineRun>,
    pub summary: Summary,
    pub manifest: Manifest,
}

fn train_baseline(config: &ExperimentConfig, data: &crate::data::Dataset, run: usize) -> Result<BaselineRun> {
    let architecture = config.architecture()?;
    let seed = derive_seed(config.seed, 0, run as u64, Purpose::BaselineInit);
    let mut model: Model = build_model(&architecture, seed);
    let lrs = vec![config.train.lr_reinit; model.block_count()];
    sgd_train(
        &mut model,
        &data.samples(Split::Train),
        &config.train,
        config.train.epochs_alpha,
        &lrs,
        &mut derive_rng(config.seed, 0, run as u64, Purpose::BaselineTrain),
    )?;
    Ok(BaselineRun {
        run,
        seed,
        validation_accuracy: model.evaluate_accuracy(&data.samples(Split::Validation))?,
        test_accuracy: model.evaluate_accuracy(&data.samples(Split::Test))?,
    })
}

/// Trains the architecture `repeats` times with plain SGD (the same budget as
/// the converging phase of a run) and summarizes test accuracy.
pub fn run_baseline(config: &ExperimentConfig, out_dir: &Path, repeats: usize, parallel: usize) -> Result<BaselineArtifacts> {
    config.validate()?;
    if repeats == 0 {
        return Err(Error::config("baseline repeats must be at least 1"));
    }
    ensure_dir(out_dir)?;
    let data = config.build_dataset()?;
    config.architecture()?;

    let manifest_path = out_dir.join(BASELINE_MANIFEST_JSON);
    let mut manifest = Manifest::start("baseline", config.hash(), config.seed);
    manifest.files = vec![
        BASELINE_MANIFEST_JSON.to_string(),
        BASELINE_RUNS_CSV.to_string(),
        BASELINE_SUMMARY_CSV.to_string(),
    ];
    manifest.record("repeats", repeats);
    write_json(&manifest_path, &manifest)?;

    let executor = Executor::new(parallel)?;
    let indices: Vec<usize> = (0..repeats).collect();
    let runs = executor
        .map(&indices, |&k| train_baseline(config, &data, k))
        .into_iter()
        .collect::<Result<Vec<_>>>();
    let runs = match runs {
        Ok(runs) => runs,
        Err(e) => {
            manifest.finish(RunStatus::Failed);
            manifest.record("error", e.to_string());
            write_json(&manifest_path, &manifest)?;
            return Err(e);
        }
    };
    write_baseline_runs(&out_dir.join(BASELINE_RUNS_CSV), &runs)?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let summary = summarize(&accuracies)?;
    write_summary(&out_dir.join(BASELINE_SUMMARY_CSV), &summary)?;

    manifest.finish(RunStatus::Complete);
    write_json(&manifest_path, &manifest)?;
    Ok(BaselineArtifacts { runs, summary, manifest })
}
