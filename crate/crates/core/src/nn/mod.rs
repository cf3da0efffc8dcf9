//! Dense ReLU networks whose trainable parameters are grouped into blocks.
//!
//! Every layer contributes two blocks: its weight matrix (`[out, in]`, row-major)
//! followed by its bias vector (`[out]`). Block ids are assigned in that order,
//! so a `2-16-3` network has blocks `W0, b0, W1, b1` with ids `0..4`.

mod checkpoint;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use train::{sgd_train, TrainConfig};

use rand::Rng as _;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, Rng};

/// Layer widths from input to output. Hidden layers use ReLU; the output layer
/// feeds a softmax cross-entropy head.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Architecture {
    widths: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::config(format!(
                "architecture needs an input, at least one hidden layer and an output, got {widths:?}"
            )));
        }
        if let Some(pos) = widths.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("layer {pos} has zero width")));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::config("class count must be at least 2"));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn block_count(&self) -> usize {
        2 * self.layer_count()
    }
}

/// Fan-in scaled uniform initializer, `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub fan_in: usize,
}

impl InitSpec {
    pub fn bound(&self) -> f32 {
        (6.0 / self.fan_in as f64).sqrt() as f32
    }

    pub fn fill(&self, values: &mut [f32], rng: &mut Rng) {
        let bound = self.bound();
        for v in values {
            *v = rng.random_range(-bound..bound);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBlock {
    pub id: usize,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    pub init: InitSpec,
}

impl ParameterBlock {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn reinitialize(&mut self, rng: &mut Rng) {
        self.init.fill(&mut self.values, rng);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    blocks: Vec<ParameterBlock>,
}

impl BlockPartition {
    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParameterBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(ParameterBlock::len).sum()
    }
}

/// Where a snapshot sits in the train / remap / retrain pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Weights after the initial SGD phase.
    Alpha,
    /// Alpha weights with some blocks redrawn by a genome.
    AlphaPlusOne,
    /// Weights after retraining a remapped network.
    Beta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockValues {
    pub id: usize,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub provenance: Provenance,
    pub blocks: Vec<BlockValues>,
}

impl WeightSnapshot {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Bitwise equality of every value, ignoring provenance.
    pub fn same_bits(&self, other: &WeightSnapshot) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.id == b.id && a.shape == b.shape && bits_equal(&a.values, &b.values))
    }
}

pub(crate) fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    architecture: Architecture,
    partition: BlockPartition,
    seed: u64,
}

pub fn build_model(architecture: &Architecture, seed: u64) -> Model {
    let mut rng = rng_from_seed(seed);
    let widths = architecture.widths();
    let mut blocks = Vec::with_capacity(architecture.block_count());
    for (layer, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let init = InitSpec { fan_in };
        for (offset, shape) in [vec![fan_out, fan_in], vec![fan_out]].into_iter().enumerate() {
            let mut values = vec![0.0; shape.iter().product()];
            init.fill(&mut values, &mut rng);
            blocks.push(ParameterBlock {
                id: 2 * layer + offset,
                shape,
                values,
                init,
            });
        }
    }
    Model {
        architecture: architecture.clone(),
        partition: BlockPartition { blocks },
        seed,
    }
}

/// Per-layer values kept from a forward pass for backpropagation.
struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l]` the post-ReLU output of layer `l - 1`.
    activations: Vec<Vec<f32>>,
    logits: Vec<f32>,
}

impl Model {
    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn partition_mut(&mut self) -> &mut BlockPartition {
        &mut self.partition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn block_count(&self) -> usize {
        self.partition.len()
    }

    pub fn class_count(&self) -> usize {
        self.architecture.class_count()
    }

    /// Sets every parameter to zero.
    pub fn zero(&mut self) {
        for block in self.partition.blocks_mut() {
            block.values.fill(0.0);
        }
    }

    pub fn snapshot(&self, provenance: Provenance) -> WeightSnapshot {
        WeightSnapshot {
            provenance,
            blocks: self
                .partition
                .blocks()
                .iter()
                .map(|b| BlockValues {
                    id: b.id,
                    shape: b.shape.clone(),
                    values: b.values.clone(),
                })
                .collect(),
        }
    }

    pub fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        self.check_compatible(snapshot)?;
        for (block, saved) in self.partition.blocks_mut().iter_mut().zip(&snapshot.blocks) {
            block.values.copy_from_slice(&saved.values);
        }
        Ok(())
    }

    pub fn check_compatible(&self, snapshot: &WeightSnapshot) -> Result<()> {
        if snapshot.blocks.len() != self.partition.len() {
            return Err(Error::shape(format!(
                "snapshot has {} blocks, model has {}",
                snapshot.blocks.len(),
                self.partition.len()
            )));
        }
        for (block, saved) in self.partition.blocks().iter().zip(&snapshot.blocks) {
            if block.id != saved.id || block.shape != saved.shape || saved.values.len() != block.len() {
                return Err(Error::shape(format!(
                    "block {} expects shape {:?}, snapshot block {} has shape {:?} with {} values",
                    block.id,
                    block.shape,
                    saved.id,
                    saved.shape,
                    saved.values.len()
                )));
            }
        }
        Ok(())
    }

    fn check_features(&self, features: &[f32], rows: usize) -> Result<()> {
        let width = self.architecture.input_width();
        if features.len() != rows * width {
            return Err(Error::shape(format!(
                "expected {rows} rows of width {width}, got {} values",
                features.len()
            )));
        }
        Ok(())
    }

    fn trace(&self, features: &[f32], rows: usize) -> ForwardTrace {
        let layers = self.architecture.layer_count();
        let blocks = self.partition.blocks();
        let mut activations = Vec::with_capacity(layers);
        activations.push(features.to_vec());
        let mut logits = Vec::new();
        for layer in 0..layers {
            let weights = &blocks[2 * layer];
            let bias = &blocks[2 * layer + 1].values;
            let (fan_out, fan_in) = (weights.shape[0], weights.shape[1]);
            let input = activations.last().unwrap();
            let mut out = vec![0.0f32; rows * fan_out];
            for r in 0..rows {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    let w = &weights.values[o * fan_in..(o + 1) * fan_in];
                    let dot: f64 = w.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum();
                    out[r * fan_out + o] = (dot + bias[o] as f64) as f32;
                }
            }
            if layer + 1 == layers {
                logits = out;
            } else {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                activations.push(out);
            }
        }
        ForwardTrace { activations, logits }
    }

    /// Raw output-layer scores, `rows x classes`.
    pub fn logits(&self, features: &[f32], rows: usize) -> Result<Vec<f32>> {
        self.check_features(features, rows)?;
        Ok(self.trace(features, rows).logits)
    }

    /// Softmax class probabilities, `rows x classes`.
    pub fn forward(&self, features: &[f32], rows: usize) -> Result<Vec<f32>> {
        let logits = self.logits(features, rows)?;
        let classes = self.class_count();
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(classes) {
            probs.extend(softmax(row).into_iter().map(|p| p as f32));
        }
        Ok(probs)
    }

    /// Mean cross-entropy over the batch and its gradient for every block.
    pub fn loss_and_grads(&self, features: &[f32], labels: &[usize]) -> Result<(f64, Vec<Vec<f32>>)> {
        let rows = labels.len();
        if rows == 0 {
            return Err(Error::data("empty batch"));
        }
        self.check_features(features, rows)?;
        let classes = self.class_count();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::data(format!("label {bad} out of range for {classes} classes")));
        }

        let trace = self.trace(features, rows);
        let blocks = self.partition.blocks();
        let layers = self.architecture.layer_count();
        let scale = 1.0 / rows as f64;

        // dL/dz for the current layer, rows x fan_out
        let mut delta = vec![0.0f64; rows * classes];
        let mut loss = 0.0f64;
        for (r, (row, &label)) in trace.logits.chunks(classes).zip(labels).enumerate() {
            let (probs, log_norm) = softmax_with_log_norm(row);
            loss += log_norm - row[label] as f64;
            for (c, p) in probs.into_iter().enumerate() {
                let target = if c == label { 1.0 } else { 0.0 };
                delta[r * classes + c] = (p - target) * scale;
            }
        }
        loss *= scale;

        let mut grads: Vec<Vec<f32>> = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
        for layer in (0..layers).rev() {
            let weights = &blocks[2 * layer];
            let (fan_out, fan_in) = (weights.shape[0], weights.shape[1]);
            let input = &trace.activations[layer];

            let mut grad_w = vec![0.0f64; fan_out * fan_in];
            let mut grad_b = vec![0.0f64; fan_out];
            for r in 0..rows {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    let d = delta[r * fan_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    grad_b[o] += d;
                    let row = &mut grad_w[o * fan_in..(o + 1) * fan_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += d * xi as f64;
                    }
                }
            }
            grads[2 * layer] = grad_w.into_iter().map(|g| g as f32).collect();
            grads[2 * layer + 1] = grad_b.into_iter().map(|g| g as f32).collect();

            if layer > 0 {
                let mut next = vec![0.0f64; rows * fan_in];
                for r in 0..rows {
                    for o in 0..fan_out {
                        let d = delta[r * fan_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        let w = &weights.values[o * fan_in..(o + 1) * fan_in];
                        for (i, &wi) in w.iter().enumerate() {
                            next[r * fan_in + i] += d * wi as f64;
                        }
                    }
                    // ReLU derivative; the stored activation is positive iff the pre-activation was.
                    for i in 0..fan_in {
                        if input[r * fan_in + i] <= 0.0 {
                            next[r * fan_in + i] = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
        Ok((loss, grads))
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict(&self, features: &[f32], rows: usize) -> Result<Vec<usize>> {
        let logits = self.logits(features, rows)?;
        Ok(logits.chunks(self.class_count()).map(argmax).collect())
    }

    pub fn evaluate_accuracy(&self, samples: &Samples) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::data("cannot evaluate accuracy on an empty split"));
        }
        let predictions = self.predict(&samples.features, samples.len())?;
        let correct = predictions
            .iter()
            .zip(&samples.labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / samples.len() as f64)
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax_with_log_norm(row: &[f32]) -> (Vec<f64>, f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / sum).collect(), max + sum.ln())
}

fn softmax(row: &[f32]) -> Vec<f64> {
    softmax_with_log_norm(row).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(widths: &[usize]) -> Architecture {
        Architecture::new(widths.to_vec()).unwrap()
    }

    #[test]
    fn rejects_malformed_descriptors() {
        assert!(matches!(Architecture::new(vec![2, 2]), Err(Error::Config(_))));
        assert!(matches!(Architecture::new(vec![2, 0, 2]), Err(Error::Config(_))));
        assert!(matches!(Architecture::new(vec![2, 4, 1]), Err(Error::Config(_))));
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = build_model(&arch(&[2, 4, 2]), 7);
        let b = build_model(&arch(&[2, 4, 2]), 7);
        let c = build_model(&arch(&[2, 4, 2]), 8);
        assert!(a.snapshot(Provenance::Alpha).same_bits(&b.snapshot(Provenance::Alpha)));
        assert!(a
            .partition()
            .blocks()
            .iter()
            .zip(c.partition().blocks())
            .any(|(x, y)| !bits_equal(&x.values, &y.values)));
    }

    #[test]
    fn block_layout_follows_layers() {
        let model = build_model(&arch(&[2, 16, 3]), 1);
        let shapes: Vec<_> = model.partition().blocks().iter().map(|b| b.shape.clone()).collect();
        assert_eq!(shapes, vec![vec![16, 2], vec![16], vec![3, 16], vec![3]]);
        assert_eq!(model.partition().parameter_count(), 16 * 2 + 16 + 3 * 16 + 3);
        for (i, b) in model.partition().blocks().iter().enumerate() {
            assert_eq!(b.id, i);
            let bound = b.init.bound();
            assert!(b.values.iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let mut model = build_model(&arch(&[3, 5, 4]), 3);
        model.zero();
        let probs = model.forward(&[0.3, -1.0, 2.0, 5.0, 5.0, 5.0], 2).unwrap();
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-7));
    }

    #[test]
    fn rows_are_distributions() {
        let model = build_model(&arch(&[4, 8, 8, 5]), 11);
        let features: Vec<f32> = (0..40).map(|i| (i as f32 * 0.37).sin() * 3.0).collect();
        let probs = model.forward(&features, 10).unwrap();
        for row in probs.chunks(5) {
            let sum: f64 = row.iter().map(|&p| p as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let model = build_model(&arch(&[3, 4, 2]), 0);
        assert!(matches!(model.forward(&[1.0, 2.0], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_network_recovers_hot_index() {
        // W0 = I, b0 = 0, W1 = I, b1 = 0: logits equal the one-hot input.
        let mut model = build_model(&arch(&[3, 3, 3]), 0);
        model.zero();
        for layer in 0..2 {
            let block = &mut model.partition_mut().blocks_mut()[2 * layer];
            for i in 0..3 {
                block.values[i * 3 + i] = 1.0;
            }
        }
        for hot in 0..3 {
            let mut x = [0.0f32; 3];
            x[hot] = 1.0;
            assert_eq!(model.predict(&x, 1).unwrap(), vec![hot]);
        }
    }

    #[test]
    fn output_bias_gradient_at_zero_logits() {
        // Zero output layer gives uniform softmax; with balanced labels over C classes the
        // mean of (softmax - onehot) is 1/C - 1/C = 0 for each class.
        let mut model = build_model(&arch(&[2, 3, 2]), 5);
        let blocks = model.partition_mut().blocks_mut();
        blocks[2].values.fill(0.0);
        blocks[3].values.fill(0.0);
        let features = [0.1, 0.2, -0.4, 0.9, 1.5, -0.3, 0.0, 0.7];
        let (loss, grads) = model.loss_and_grads(&features, &[0, 1, 0, 1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(grads[3].iter().all(|g| g.abs() < 1e-7));
        // Unbalanced: all labels 0 -> gradient (1/2 - 1, 1/2).
        let (_, grads) = model.loss_and_grads(&features, &[0, 0, 0, 0]).unwrap();
        assert!((grads[3][0] + 0.5).abs() < 1e-7);
        assert!((grads[3][1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn duplicated_batch_gives_same_loss_and_grads() {
        let model = build_model(&arch(&[2, 6, 3]), 9);
        let features = [0.5, -0.2, 1.0, 0.3, -0.7, -0.9];
        let labels = [2, 0, 1];
        let (l1, g1) = model.loss_and_grads(&features, &labels).unwrap();
        let doubled: Vec<f32> = features.iter().chain(&features).copied().collect();
        let (l2, g2) = model.loss_and_grads(&doubled, &[2, 0, 1, 2, 0, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-7 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn bad_labels_and_empty_batches_are_data_errors() {
        let model = build_model(&arch(&[2, 3, 2]), 0);
        assert!(matches!(model.loss_and_grads(&[0.0, 0.0], &[2]), Err(Error::Data(_))));
        assert!(matches!(model.loss_and_grads(&[], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn uniform_model_accuracy_is_share_of_class_zero() {
        let mut model = build_model(&arch(&[1, 2, 4]), 0);
        model.zero();
        // 8 samples, two per class: every prediction is class 0.
        let samples = Samples::new((0..8).map(|i| i as f32).collect(), (0..8).map(|i| i % 4).collect(), 1);
        assert_eq!(model.evaluate_accuracy(&samples).unwrap(), 0.25);
        assert!(matches!(
            model.evaluate_accuracy(&Samples::new(vec![], vec![], 1)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let model = build_model(&arch(&[2, 4, 2]), 3);
        let snap = model.snapshot(Provenance::Alpha);
        let mut other = build_model(&arch(&[2, 4, 2]), 4);
        other.restore(&snap).unwrap();
        assert!(other.snapshot(Provenance::Alpha).same_bits(&snap));

        let mut short = snap.clone();
        short.blocks.pop();
        assert!(matches!(other.restore(&short), Err(Error::Shape(_))));
    }
}
