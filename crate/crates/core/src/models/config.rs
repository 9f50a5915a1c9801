use serde::{Deserialize, Serialize};

use super::ModelError;

/// Training hyperparameters shared by the tagger and the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Peak SGD step size for the classifier.
    pub learning_rate: f64,
    /// Step size recorded for fine-tuned encoders behind file-backed
    /// embeddings; not used by the linear heads.
    pub fine_tune_learning_rate: f64,
    /// Fraction of optimizer steps spent in linear warmup.
    pub warmup: f64,
    pub batch_size: usize,
    pub max_seq_len: usize,
    /// Probability of zeroing a pooled feature during classifier training.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.1,
            fine_tune_learning_rate: 3e-5,
            warmup: 0.1,
            batch_size: 32,
            max_seq_len: 128,
            dropout: 0.3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return bad("warmup must be in [0, 1)");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if self.max_seq_len < 2 {
            return bad("max sequence length must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Step size at optimizer step `step` of `total`: linear warmup, then
    /// linear decay towards zero.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let warm = (self.warmup * total as f64).floor() as usize;
        if step < warm {
            self.learning_rate * (step + 1) as f64 / warm as f64
        } else {
            let rest = (total - warm).max(1);
            self.learning_rate * (total.saturating_sub(step)) as f64 / rest as f64
        }
    }
}
