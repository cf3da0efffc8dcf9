//! Datasets: synthetic generators, IDX ingestion, stratified splitting and
//! train-statistics standardization.

mod idx;

pub use idx::{
    decode_idx_images, decode_idx_labels, decode_idx_pair, encode_idx_images, encode_idx_labels, load_idx, IdxImages,
};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Row-major feature matrix with labels; the unit of training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: Vec<f32>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Samples {
    pub fn new(features: Vec<f32>, labels: Vec<usize>, dim: usize) -> Self {
        debug_assert_eq!(features.len(), labels.len() * dim);
        Self { features, labels, dim }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f32>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub class_count: usize,
    pub splits: Vec<Split>,
}

impl Dataset {
    /// Every sample starts in the training split.
    pub fn new(features: Vec<f32>, labels: Vec<usize>, dim: usize, class_count: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::data(format!("label {bad} out of range for {class_count} classes")));
        }
        let splits = vec![Split::Train; labels.len()];
        Ok(Self {
            features,
            labels,
            dim,
            class_count,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn samples(&self, split: Split) -> Samples {
        self.gather(&self.indices(split))
    }

    pub fn all_samples(&self) -> Samples {
        Samples::new(self.features.clone(), self.labels.clone(), self.dim)
    }

    fn gather(&self, indices: &[usize]) -> Samples {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Samples::new(features, labels, self.dim)
    }

    /// CSV with header `f0,..,fD-1,label,split`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.dim)
            .map(|j| format!("f{j}"))
            .chain(["label".to_string(), "split".to_string()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut fields: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            fields.push(self.labels[i].to_string());
            fields.push(self.splits[i].as_str().to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

/// Two interleaved half circles. Class 0 lies on the upper unit half circle,
/// class 1 on the lower one shifted by `(1, 0.5)`; Gaussian jitter of
/// `noise_sigma` is added to both coordinates.
pub fn generate_two_moons(n_samples: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n_samples < 10 {
        return Err(Error::config("two-moons needs at least 10 samples"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config("two-moons noise must be non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let n_upper = n_samples.div_ceil(2);
    let n_lower = n_samples - n_upper;
    let mut features = Vec::with_capacity(2 * n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    let angle = |i: usize, n: usize| std::f64::consts::PI * i as f64 / (n - 1) as f64;
    for i in 0..n_upper {
        let t = angle(i, n_upper);
        features.extend([t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_lower {
        let t = angle(i, n_lower);
        features.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    let features = features
        .into_iter()
        .map(|v| {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            (v + noise_sigma * jitter) as f32
        })
        .collect();
    Dataset::new(features, labels, 2, 2)
}

/// Isotropic Gaussian clusters; sample `i` belongs to class `i % centers.len()`.
pub fn generate_blobs(n_samples: usize, centers: &[Vec<f32>], sigma: f64, seed: u64) -> Result<Dataset> {
    if centers.len() < 2 {
        return Err(Error::config("blobs need at least 2 centers"));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::config("blob centers must share a non-zero dimension"));
    }
    if n_samples < centers.len() {
        return Err(Error::config("blobs need at least one sample per center"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("blob sigma must be non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n_samples * dim);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % centers.len();
        for &c in &centers[class] {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            features.push((c as f64 + sigma * jitter) as f32);
        }
        labels.push(class);
    }
    Dataset::new(features, labels, dim, centers.len())
}

/// Per-class counts of `(train, validation, test)` for a class of `n` samples.
fn stratum_counts(n: usize, fractions: (f64, f64, f64)) -> (usize, usize, usize) {
    let val = ((n as f64 * fractions.1).round() as usize).max(1);
    let test = ((n as f64 * fractions.2).round() as usize).max(1);
    let mut train = n as isize - val as isize - test as isize;
    let (mut val, mut test) = (val, test);
    while train < 1 {
        if val >= test && val > 1 {
            val -= 1;
        } else if test > 1 {
            test -= 1;
        }
        train += 1;
    }
    (train as usize, val, test)
}

/// Stratified train / validation / test assignment. Within each class the
/// samples are shuffled with `seed` and cut by the rounded fractions, keeping
/// every split non-empty.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = dataset.clone();
    for class in 0..dataset.class_count {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::data(format!(
                "class {class} has {} samples, fewer than the 3 splits",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let (n_train, n_val, _) = stratum_counts(members.len(), fractions);
        for (k, &i) in members.iter().enumerate() {
            out.splits[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// Standardizes every feature with the mean and population standard deviation
/// of the training split. Features that are constant on the training split map to 0.
pub fn normalize(dataset: &Dataset) -> Result<Dataset> {
    let train = dataset.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::data("normalization needs a non-empty train split"));
    }
    let dim = dataset.dim;
    let mut mean = vec![0.0f64; dim];
    for &i in &train {
        for (m, &v) in mean.iter_mut().zip(dataset.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    let mut var = vec![0.0f64; dim];
    for &i in &train {
        for ((s, &v), m) in var.iter_mut().zip(dataset.row(i)).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let stdev: Vec<f64> = var.iter().map(|s| (s / train.len() as f64).sqrt()).collect();

    let mut out = dataset.clone();
    for row in out.features.chunks_mut(dim) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&stdev) {
            *v = if *s <= 1e-12 { 0.0 } else { ((*v as f64 - m) / s) as f32 };
        }
    }
    if out.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite feature after normalization"));
    }
    Ok(out)
}
