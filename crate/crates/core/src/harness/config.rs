//! Experiment configuration.
//!
//! Config files are TOML restricted to flat `section.key = value` pairs (either
//! as `[section]` tables or dotted keys). Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! parallel = 0                  # worker threads, 0 = all cores
//!
//! [dataset]
//! kind = "two_moons"            # two_moons | blobs | idx
//! samples = 400
//! noise = 0.25
//! split = [0.6, 0.2, 0.2]       # train, validation, test
//!
//! [model]
//! layers = [2, 32, 32, 2]
//!
//! [train]
//! epochs_alpha = 200
//! epochs_beta = 50
//! batch_size = 32
//! lr_retained = 0.001
//! lr_reinit = 0.01
//!
//! [evolution]
//! population_size = 5
//! generations = 10
//! crossover_probability = 0.9
//! mutation_probability = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::nn::{Architecture, TrainConfig};

pub const SEED_ENV: &str = "NE_SGD_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TwoMoons,
    Blobs,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// IDX paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub split: [f64; 3],
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Generator and split seed; the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { repeats: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub parallel: usize,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative dataset paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies the `NE_SGD_SEED` override.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Ok(value) = std::env::var(SEED_ENV) {
            config.seed = value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={value:?} is not an unsigned 64-bit integer")))?;
        }
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.evolution.validate()?;
        self.architecture()?;
        if self.baseline.repeats == 0 {
            return Err(Error::config("baseline.repeats must be at least 1"));
        }
        let d = &self.dataset;
        let require = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(format!("missing key dataset.{key} for dataset.kind = {:?}", d.kind)))
            }
        };
        match d.kind {
            DatasetKind::TwoMoons => {
                require(d.samples.is_some(), "samples")?;
                require(d.noise.is_some(), "noise")?;
            }
            DatasetKind::Blobs => {
                require(d.samples.is_some(), "samples")?;
                require(d.centers.is_some(), "centers")?;
                require(d.sigma.is_some(), "sigma")?;
            }
            DatasetKind::Idx => {
                require(d.images.is_some(), "images")?;
                require(d.labels.is_some(), "labels")?;
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.model.layers.clone())
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    /// Generates or loads the data, assigns splits and standardizes features.
    pub fn build_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        let seed = self.dataset_seed();
        let raw = match d.kind {
            DatasetKind::TwoMoons => data::generate_two_moons(d.samples.unwrap(), d.noise.unwrap(), seed)?,
            DatasetKind::Blobs => {
                data::generate_blobs(d.samples.unwrap(), d.centers.as_ref().unwrap(), d.sigma.unwrap(), seed)?
            }
            DatasetKind::Idx => {
                let resolve = |p: &PathBuf| self.base_dir.join(p);
                let images = resolve(d.images.as_ref().unwrap());
                let labels = resolve(d.labels.as_ref().unwrap());
                let read = |p: &Path| std::fs::read(p).map_err(|e| Error::file(p, e));
                data::decode_idx_pair(&read(&images)?, &read(&labels)?)?
            }
        };
        let [tr, va, te] = d.split;
        let split = data::split(&raw, (tr, va, te), seed)?;
        if d.normalize {
            data::normalize(&split)
        } else {
            Ok(split)
        }
    }

    /// SHA-256 over the canonical JSON form of every setting that can change
    /// results. Output location and worker count are excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
            map.remove("parallel");
        }
        // serde_json maps are ordered by key, so this is independent of file order
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = include_str!("../../presets/desk.preset");
    const PAPER: &str = include_str!("../../presets/paper.preset");

    #[test]
    fn presets_parse() {
        let desk = ExperimentConfig::from_toml(DESK).unwrap();
        assert_eq!(desk.evolution.population_size, 5);
        assert_eq!(desk.evolution.generations, 10);
        assert_eq!((desk.train.epochs_alpha, desk.train.epochs_beta), (200, 50));
        assert_eq!((desk.train.lr_retained, desk.train.lr_reinit), (0.001, 0.01));

        let paper = ExperimentConfig::from_toml(PAPER).unwrap();
        assert_eq!(paper.train.batch_size, 128);
        assert_eq!(paper.train.weight_decay, 5e-4);
        assert_eq!(paper.train.epochs_alpha, 350);
        assert_eq!(paper.evolution.generations, 30);
        assert_eq!(paper.evolution.population_size, 5);
        assert_eq!(paper.evolution.crossover_probability, 0.9);
        assert_eq!(paper.evolution.mutation_probability, 0.1);
    }

    #[test]
    fn missing_rate_is_named() {
        let text = DESK.replace("lr_reinit = 0.01", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("lr_reinit"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn rate_order_is_enforced() {
        let text = DESK.replace("lr_retained = 0.001", "lr_retained = 0.05");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("lr_retained - lr_reinit < 0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = DESK.replace("[train]", "[train]\nlearning_rate = 0.1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_ignores_key_order_and_output() {
        let a = ExperimentConfig::from_toml(DESK).unwrap();
        let reordered = DESK.replace(
            "lr_retained = 0.001\nlr_reinit = 0.01",
            "lr_reinit = 0.01\nlr_retained = 0.001",
        );
        assert_ne!(reordered, DESK);
        let b = ExperimentConfig::from_toml(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());

        let mut c = a.clone();
        c.output.dir = PathBuf::from("elsewhere");
        c.parallel = 7;
        assert_eq!(a.hash(), c.hash());

        let mut d = a.clone();
        d.train.lr_retained = 0.002;
        assert_ne!(a.hash(), d.hash());
        let mut e = a.clone();
        e.evolution.suppression = !e.evolution.suppression;
        assert_ne!(a.hash(), e.hash());
    }

    #[test]
    fn dataset_keys_are_checked_per_kind() {
        let text = DESK.replace("noise = 0.25", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("dataset.noise"), "{err}");
    }

    #[test]
    fn desk_dataset_builds() {
        let desk = ExperimentConfig::from_toml(DESK).unwrap();
        let data = desk.build_dataset().unwrap();
        assert_eq!(data.len(), 400);
        assert_eq!(data.dim, 2);
    }
}
