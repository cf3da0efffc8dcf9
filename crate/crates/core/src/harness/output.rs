//! File formats written by the harness.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{GenerationLog, Individual};
use crate::stats::{Summary, SUMMARY_COLUMNS};

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const BEST_JSON: &str = "best.json";
pub const BEST_CHECKPOINT: &str = "best.nesg";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const BASELINE_RUNS_CSV: &str = "baseline_runs.csv";
pub const BASELINE_SUMMARY_CSV: &str = "baseline_summary.csv";
pub const BASELINE_MANIFEST_JSON: &str = "baseline_manifest.json";
pub const REPORT_SVG: &str = "report.svg";
pub const REPORT_TXT: &str = "report.txt";

pub const GENERATION_COLUMNS: [&str; 8] = [
    "generation",
    "best_raw",
    "median_raw",
    "min_raw",
    "nabla",
    "suppressed_count",
    "best_genome",
    "wall_time_seconds",
];

/// Placeholder written over the wall-time column by [`mask_wall_time`].
pub const MASK: &str = "*";

/// Nine significant digits in positional notation with a `.` separator.
pub fn format_sig9(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value:.8}");
    }
    let exponent = value.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    format!("{value:.decimals$}")
}

pub fn generation_row(log: &GenerationLog) -> [String; 8] {
    [
        log.generation.to_string(),
        format_sig9(log.best_raw),
        format_sig9(log.median_raw),
        format_sig9(log.min_raw),
        format_sig9(log.nabla),
        log.suppressed_count.to_string(),
        log.best_genome.clone(),
        format_sig9(log.wall_time_seconds),
    ]
}

/// Streams generation rows to disk, flushing after each one.
pub struct GenerationCsv {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl GenerationCsv {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = std::fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(GENERATION_COLUMNS).map_err(|e| csv_error(&path, e))?;
        writer.flush().map_err(|e| Error::file(&path, e))?;
        Ok(Self { path, writer })
    }

    pub fn append(&mut self, log: &GenerationLog) -> Result<()> {
        self.writer
            .write_record(generation_row(log))
            .map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::file(&self.path, e))
    }
}

pub fn generations_csv_string(logs: &[GenerationLog]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(GENERATION_COLUMNS).unwrap();
    for log in logs {
        writer.write_record(generation_row(log)).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// Replaces the wall-time column of a generation CSV with [`MASK`], the form
/// used for byte-identity comparisons between runs.
pub fn mask_wall_time(csv_text: &str) -> String {
    let mut out = String::with_capacity(csv_text.len());
    for (i, line) in csv_text.lines().enumerate() {
        match line.rfind(',') {
            Some(pos) if i > 0 => {
                out.push_str(&line[..=pos]);
                out.push_str(MASK);
            }
            _ => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

/// One parsed row of a generation CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GenerationRow {
    pub generation: u64,
    pub best_raw: f64,
    pub median_raw: f64,
    pub min_raw: f64,
    pub nabla: f64,
    pub suppressed_count: usize,
    pub best_genome: String,
    pub wall_time_seconds: f64,
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(GENERATION_COLUMNS) {
        return Err(Error::data(format!(
            "{}: unexpected header {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<GenerationRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// `{"generation", "id", "genome", "raw_fitness", "adjusted_fitness"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub generation: u64,
    pub id: u64,
    pub genome: String,
    pub raw_fitness: f64,
    pub adjusted_fitness: f64,
}

impl BestRecord {
    pub fn from_individual(ind: &Individual) -> Self {
        let raw = ind.raw_fitness.unwrap_or(0.0);
        Self {
            generation: ind.birth_generation,
            id: ind.id,
            genome: ind.genome.to_string(),
            raw_fitness: raw,
            adjusted_fitness: ind.adjusted_fitness.unwrap_or(raw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub run: usize,
    pub seed: u64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

/// Accuracies are written with round-trip precision.
pub fn write_baseline_runs(path: &Path, runs: &[BaselineRun]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["run", "seed", "validation_accuracy", "test_accuracy"])
        .map_err(|e| csv_error(path, e))?;
    for r in runs {
        writer
            .write_record([
                r.run.to_string(),
                r.seed.to_string(),
                format!("{:?}", r.validation_accuracy),
                format!("{:?}", r.test_accuracy),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::file(path, e))
}

pub fn read_baseline_runs(path: &Path) -> Result<Vec<BaselineRun>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<BaselineRun>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Header is exactly [`SUMMARY_COLUMNS`]; one row. Values use full
/// round-trip precision so they can be checked against recomputation.
pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer.write_record(SUMMARY_COLUMNS).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(summary.values().map(|v| format!("{v:?}")))
        .map_err(|e| csv_error(path, e))?;
    writer.flush().map_err(|e| Error::file(path, e))
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .next()
        .ok_or_else(|| Error::data(format!("{}: no summary row", path.display())))?
        .map_err(|e| csv_error(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub results: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn start(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            seed,
            started_unix: unix_now(),
            finished_unix: None,
            status: RunStatus::Running,
            files: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    pub fn finish(&mut self, status: RunStatus) {
        self.status = status;
        self.finished_unix = Some(unix_now());
    }

    pub fn record(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.results.insert(key.to_string(), value.into());
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::file(path, e))
}
