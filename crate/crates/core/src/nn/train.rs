use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Hyperparameters for both SGD phases.
///
/// `lr_retained` applies to blocks kept from the converged network and must be
/// strictly smaller than `lr_reinit`, which applies to freshly drawn blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_alpha: usize,
    pub epochs_beta: usize,
    pub batch_size: usize,
    pub lr_retained: f64,
    pub lr_reinit: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_momentum() -> f64 {
    0.9
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_alpha == 0 || self.epochs_beta == 0 {
            return Err(Error::config("train.epochs_alpha and train.epochs_beta must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        if !(self.lr_retained > 0.0 && self.lr_reinit > 0.0)
            || !self.lr_retained.is_finite()
            || !self.lr_reinit.is_finite()
        {
            return Err(Error::config("train.lr_retained and train.lr_reinit must be positive"));
        }
        if self.lr_retained - self.lr_reinit >= 0.0 {
            return Err(Error::config(format!(
                "learning-rate constraint lr_retained - lr_reinit < 0 violated: \
                 train.lr_retained = {} must be strictly less than train.lr_reinit = {}",
                self.lr_retained, self.lr_reinit
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Minibatch SGD with classical momentum and decoupled weight decay.
///
/// Per step and block, with learning rate `lr` from `block_lrs`:
/// `v = momentum * v + g`, `w = w * (1 - lr * weight_decay) - lr * v`.
/// Blocks whose rate is zero are not touched at all. Each epoch visits the
/// samples in an order shuffled by `rng`. Returns the mean training loss per epoch.
pub fn sgd_train(
    model: &mut Model,
    samples: &Samples,
    config: &TrainConfig,
    epochs: usize,
    block_lrs: &[f64],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::data("cannot train on an empty split"));
    }
    if block_lrs.len() != model.block_count() {
        return Err(Error::shape(format!(
            "learning-rate assignment covers {} blocks, model has {}",
            block_lrs.len(),
            model.block_count()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }

    let dim = samples.dim;
    let momentum = config.momentum as f32;
    let lrs: Vec<f32> = block_lrs.iter().map(|&lr| lr as f32).collect();
    let keep: Vec<f32> = lrs
        .iter()
        .map(|&lr| 1.0 - lr * config.weight_decay as f32)
        .collect();
    let mut velocity: Vec<Vec<f32>> = model
        .partition()
        .blocks()
        .iter()
        .map(|b| vec![0.0; b.len()])
        .collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch_features = Vec::with_capacity(config.batch_size * dim);
    let mut batch_labels = Vec::with_capacity(config.batch_size);
    let mut curve = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_features.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_features.extend_from_slice(samples.row(i));
                batch_labels.push(samples.labels[i]);
            }
            let (loss, grads) = model.loss_and_grads(&batch_features, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;

            for (((block, grad), vel), (&lr, &keep)) in model
                .partition_mut()
                .blocks_mut()
                .iter_mut()
                .zip(&grads)
                .zip(&mut velocity)
                .zip(lrs.iter().zip(&keep))
            {
                if lr == 0.0 {
                    continue;
                }
                for ((w, &g), v) in block.values.iter_mut().zip(grad).zip(vel.iter_mut()) {
                    *v = momentum * *v + g;
                    *w = *w * keep - lr * *v;
                }
            }
        }
        curve.push(epoch_loss / samples.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use crate::nn::{build_model, Architecture, Provenance};
    use crate::seed::rng_from_seed;

    fn config(momentum: f64, weight_decay: f64, batch_size: usize) -> TrainConfig {
        TrainConfig {
            epochs_alpha: 1,
            epochs_beta: 1,
            batch_size,
            lr_retained: 0.001,
            lr_reinit: 0.01,
            weight_decay,
            momentum,
        }
    }

    fn tiny() -> (Model, Samples) {
        let model = build_model(&Architecture::new(vec![2, 5, 3]).unwrap(), 21);
        let samples = Samples::new(
            vec![0.2, -0.1, 1.3, 0.4, -0.8, 0.6, 0.05, 0.9],
            vec![0, 1, 2, 1],
            2,
        );
        (model, samples)
    }

    #[test]
    fn validation_enforces_rate_order() {
        let mut c = config(0.9, 5e-4, 8);
        assert!(c.validate().is_ok());
        c.lr_retained = 0.01;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("lr_retained - lr_reinit < 0"), "{err}");
        c.lr_retained = 0.02;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_rates_leave_weights_bit_identical() {
        let (mut model, samples) = tiny();
        let before = model.snapshot(Provenance::Alpha);
        let lrs = vec![0.0; model.block_count()];
        sgd_train(&mut model, &samples, &config(0.9, 5e-4, 3), 5, &lrs, &mut rng_from_seed(1)).unwrap();
        assert!(model.snapshot(Provenance::Alpha).same_bits(&before));
    }

    #[test]
    fn single_plain_step_matches_closed_form() {
        let (mut model, samples) = tiny();
        let (_, grads) = model.loss_and_grads(&samples.features, &samples.labels).unwrap();
        let before = model.snapshot(Provenance::Alpha);
        let lr = 0.05f64;
        let mut lrs = vec![0.0; model.block_count()];
        lrs[2] = lr;
        // One full-split batch; the gradient is taken in the shuffled row order the trainer uses.
        let mut rng = rng_from_seed(3);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng.clone());
        let feats: Vec<f32> = order.iter().flat_map(|&i| samples.row(i).to_vec()).collect();
        let labels: Vec<usize> = order.iter().map(|&i| samples.labels[i]).collect();
        let (_, grads_perm) = model.loss_and_grads(&feats, &labels).unwrap();
        sgd_train(&mut model, &samples, &config(0.0, 0.0, 4), 1, &lrs, &mut rng).unwrap();

        let after = model.snapshot(Provenance::Alpha);
        for (i, (a, b)) in after.blocks.iter().zip(&before.blocks).enumerate() {
            if i == 2 {
                for ((w1, w0), g) in a.values.iter().zip(&b.values).zip(&grads_perm[2]) {
                    assert_eq!(w1.to_bits(), (w0 - lr as f32 * g).to_bits());
                }
                for (g, gp) in grads[2].iter().zip(&grads_perm[2]) {
                    assert!((g - gp).abs() <= 1e-6);
                }
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn decay_alone_scales_weights() {
        // Zero gradient: labels never matter if the gradient is zeroed, so use the
        // update rule directly through a model whose output is constant and balanced.
        let mut model = build_model(&Architecture::new(vec![1, 2, 2]).unwrap(), 0);
        model.zero();
        // Only the first-layer weights are non-zero; hidden activations are zero
        // for input 0, so every gradient on W0 vanishes.
        model.partition_mut().blocks_mut()[0].values = vec![2.0, -3.0];
        let samples = Samples::new(vec![0.0, 0.0], vec![0, 1], 1);
        let (lr, decay) = (0.5f64, 0.5f64);
        let lrs = vec![lr, 0.0, 0.0, 0.0];
        sgd_train(&mut model, &samples, &config(0.0, decay, 2), 1, &lrs, &mut rng_from_seed(0)).unwrap();
        let factor = 1.0 - (lr * decay) as f32;
        assert_eq!(model.partition().blocks()[0].values, vec![2.0 * factor, -3.0 * factor]);
    }

    #[test]
    fn frozen_block_survives_momentum_free_training() {
        let (mut model, samples) = tiny();
        let frozen = model.partition().blocks()[1].values.clone();
        let lrs = vec![0.1, 0.0, 0.1, 0.1];
        sgd_train(&mut model, &samples, &config(0.0, 5e-4, 2), 20, &lrs, &mut rng_from_seed(4)).unwrap();
        assert!(crate::nn::bits_equal(&model.partition().blocks()[1].values, &frozen));
    }

    #[test]
    fn training_reduces_loss_on_separable_blobs() {
        let data = generate_blobs(120, &[vec![-3.0, -3.0], vec![3.0, 3.0]], 0.5, 5).unwrap();
        let samples = data.all_samples();
        let mut model = build_model(&Architecture::new(vec![2, 16, 2]).unwrap(), 8);
        let lrs = vec![0.01; 4];
        let curve = sgd_train(&mut model, &samples, &config(0.9, 5e-4, 16), 200, &lrs, &mut rng_from_seed(9)).unwrap();
        assert_eq!(curve.len(), 200);
        assert!(curve.last().unwrap() < curve.first().unwrap());
        assert_eq!(model.evaluate_accuracy(&samples).unwrap(), 1.0);
    }

    #[test]
    fn same_seed_same_result() {
        let run = || {
            let (mut model, samples) = tiny();
            let curve =
                sgd_train(&mut model, &samples, &config(0.9, 5e-4, 3), 7, &[0.01; 4], &mut rng_from_seed(2)).unwrap();
            (model.snapshot(Provenance::Beta), curve)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert!(a.same_bits(&b));
        assert_eq!(ca, cb);
    }

    #[test]
    fn empty_split_and_bad_assignment_are_rejected() {
        let (mut model, samples) = tiny();
        let empty = Samples::new(vec![], vec![], 2);
        let c = config(0.9, 0.0, 2);
        assert!(matches!(
            sgd_train(&mut model, &empty, &c, 1, &[0.1; 4], &mut rng_from_seed(0)),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            sgd_train(&mut model, &samples, &c, 1, &[0.1; 3], &mut rng_from_seed(0)),
            Err(Error::Shape(_))
        ));
    }
}
