//! Classifier architecture and training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Samples per window (sequence length).
    pub seq_len: usize,
    /// Features per sample.
    pub n_features: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Reference architecture: 6 encoder layers, 8 heads, width 64, FFN 256.
    pub fn reference(seq_len: usize, n_features: usize, n_classes: usize) -> Self {
        Self {
            layers: 6,
            heads: 8,
            d_model: 64,
            d_ff: 256,
            seq_len,
            n_features,
            n_classes,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.heads == 0
            || self.d_model == 0
            || self.d_ff == 0
            || self.seq_len == 0
            || self.n_features == 0
            || self.n_classes < 2
        {
            return Err(Error::Validation(
                "model dimensions must be positive (and at least 2 classes)".into(),
            ));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Validation(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::Validation("invalid optimizer constants".into()));
        }
        Ok(())
    }
}
