//! Adam optimizer, training loop, and evaluation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix, stream_rng};
use crate::scenario::dataset::Dataset;
use crate::tsformer::config::TrainConfig;
use crate::tsformer::model::{backward, cross_entropy, forward};
use crate::tsformer::params::{ModelParams, TensorStore};

// Disjoint derived streams off the training seed.
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    cfg: TrainConfig,
}

impl Adam {
    pub fn new(n_params: usize, cfg: TrainConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            cfg,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &TensorStore) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.store.data.len() {
            let g = grads.data[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params.store.data[i] -= self.cfg.learning_rate * mhat / (vhat.sqrt() + self.cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// counts[true][predicted]
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total().max(1) as f64
    }

    pub fn per_class_accuracy(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    f64::NAN
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect()
    }
}

/// Stack normalized windows `idx` into one (len*S) x M matrix plus labels.
pub fn stack_windows(dataset: &Dataset, idx: &[u32]) -> (Array2<f64>, Vec<u8>) {
    let mut x = Array2::zeros((idx.len() * dataset.s, dataset.m));
    let mut labels = Vec::with_capacity(idx.len());
    for (b, &i) in idx.iter().enumerate() {
        let z = dataset.normalized_window(i as usize);
        x.slice_mut(ndarray::s![b * dataset.s..(b + 1) * dataset.s, ..])
            .assign(&z);
        labels.push(dataset.windows[i as usize].label);
    }
    (x, labels)
}

/// Dropout-free evaluation over the given window indices.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, idx: &[u32]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(params.config.n_classes);
    for chunk in idx.chunks(16) {
        let (x, labels) = stack_windows(dataset, chunk);
        let cache = forward(params, &x, None)?;
        for (b, &y) in labels.iter().enumerate() {
            let row = cache.probs.row(b);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            cm.record(y as usize, pred);
        }
    }
    Ok(cm)
}

/// Minibatch Adam training over the dataset's train split, evaluating on the
/// test split after every epoch. Fully sequential and deterministic in
/// (initial params, dataset, config).
pub fn train(
    params: &mut ModelParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(&EpochStats)>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if dataset.train_idx.is_empty() || dataset.test_idx.is_empty() {
        return Err(Error::Validation(
            "dataset has no train/test split; split it before training".into(),
        ));
    }
    if dataset.s != params.config.seq_len
        || dataset.m != params.config.n_features
        || dataset.n_classes != params.config.n_classes
    {
        return Err(Error::Dimension(format!(
            "dataset is S={} M={} C={} but model expects S={} M={} C={}",
            dataset.s,
            dataset.m,
            dataset.n_classes,
            params.config.seq_len,
            params.config.n_features,
            params.config.n_classes
        )));
    }

    let mut adam = Adam::new(params.n_params(), *cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order = dataset.train_idx.clone();
        let mut shuffle_rng = stream_rng(mix(cfg.seed, SHUFFLE_STREAM), epoch as u64);
        order.shuffle(&mut shuffle_rng);
        let mut dropout_rng = stream_rng(mix(cfg.seed, DROPOUT_STREAM), epoch as u64);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = stack_windows(dataset, chunk);
            let cache = forward(params, &x, Some(&mut dropout_rng))?;
            let loss = cross_entropy(&cache, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}: loss {loss}"
                )));
            }
            loss_sum += loss * labels.len() as f64;
            for (b, &y) in labels.iter().enumerate() {
                let row = cache.probs.row(b);
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                if pred == y as usize {
                    correct += 1;
                }
            }
            let grads = backward(params, &cache, &labels)?;
            adam.step(params, &grads);
        }

        let test_cm = evaluate(params, dataset, &dataset.test_idx)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / dataset.train_idx.len() as f64,
            train_acc: correct as f64 / dataset.train_idx.len() as f64,
            test_acc: test_cm.accuracy(),
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&stats);
        }
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::dataset::Window;
    use crate::tsformer::config::ModelConfig;
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            seq_len: 5,
            n_features: 2,
            n_classes: 3,
            dropout: 0.1,
        }
    }

    /// Easily separable toy problem: class c has mean level c.
    fn toy_dataset(per_class: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let mut windows = Vec::new();
        for c in 0..3u8 {
            for _ in 0..per_class {
                let z = Array2::from_shape_fn((5, 2), |_| {
                    c as f64 + 0.1 * rng.gen_range(-1.0..1.0)
                });
                windows.push(Window { z, label: c });
            }
        }
        let mut ds = Dataset::new(windows, 5, 2, 3).unwrap();
        ds.split(0.8, 1).unwrap();
        ds
    }

    #[test]
    fn confusion_matrix_arithmetic() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0);
        cm.record(0, 1);
        cm.record(1, 1);
        cm.record(2, 2);
        assert_eq!(cm.total(), 4);
        assert!((cm.accuracy() - 0.75).abs() < 1e-12);
        let pc = cm.per_class_accuracy();
        assert!((pc[0] - 0.5).abs() < 1e-12);
        assert!((pc[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_reduces_loss_on_quadratic() {
        // Sanity check of the update rule outside the network: minimize
        // 0.5*x^2 by feeding gradient x.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut params = ModelParams::init(tiny_cfg(), 0).unwrap();
        let n = params.n_params();
        params.store.data.fill(1.0);
        let mut adam = Adam::new(n, cfg);
        for _ in 0..200 {
            let mut grads = TensorStore::zeros(params.store.layout.clone());
            grads.data.copy_from_slice(&params.store.data);
            adam.step(&mut params, &grads);
        }
        assert!(params.store.data.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn training_learns_separable_toy_problem() {
        let ds = toy_dataset(12, 3);
        let mut params = ModelParams::init(tiny_cfg(), 7).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let history = train(&mut params, &ds, &cfg, None).unwrap();
        assert_eq!(history.len(), 40);
        assert!(history.last().unwrap().train_loss < history[0].train_loss);
        let cm = evaluate(&params, &ds, &ds.test_idx).unwrap();
        assert!(
            cm.accuracy() > 0.9,
            "test accuracy {} on separable data",
            cm.accuracy()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_dataset(6, 3);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut a = ModelParams::init(tiny_cfg(), 7).unwrap();
        let ha = train(&mut a, &ds, &cfg, None).unwrap();
        let mut b = ModelParams::init(tiny_cfg(), 7).unwrap();
        let hb = train(&mut b, &ds, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let mut c = ModelParams::init(tiny_cfg(), 7).unwrap();
        let hc = train(
            &mut c,
            &ds,
            &TrainConfig {
                seed: 1,
                ..cfg
            },
            None,
        )
        .unwrap();
        assert_ne!(ha, hc);
    }

    #[test]
    fn unsplit_dataset_rejected() {
        let mut ds = toy_dataset(6, 3);
        ds.train_idx.clear();
        ds.test_idx.clear();
        let mut params = ModelParams::init(tiny_cfg(), 0).unwrap();
        assert!(train(&mut params, &ds, &TrainConfig::default(), None).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ds = toy_dataset(6, 3);
        let mut cfg = tiny_cfg();
        cfg.n_features = 4;
        let mut params = ModelParams::init(cfg, 0).unwrap();
        assert!(train(&mut params, &ds, &TrainConfig::default(), None).is_err());
    }
}
