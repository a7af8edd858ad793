use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::MAX_SEQUENCE_LEN;

/// Transformer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl ModelConfig {
    /// The desk-scale default: 2 layers, 4 heads, d=128, f=512, 512 positions.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            num_heads: 4,
            model_dim: 128,
            ff_dim: 512,
            vocab_size,
            max_len: 512,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("model_dim", self.model_dim),
            ("ff_dim", self.ff_dim),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.model_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "model_dim {} must be even for sinusoidal positions",
                self.model_dim
            )));
        }
        if self.max_len > MAX_SEQUENCE_LEN {
            return Err(Error::Config(format!(
                "max_len {} exceeds {MAX_SEQUENCE_LEN}",
                self.max_len
            )));
        }
        Ok(())
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: usize,
    /// After warmup, decay linearly to zero at `steps`.
    pub linear_decay: bool,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Restrict the loss to tokens after the context segment.
    pub mask_context: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 8,
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_steps: 100,
            linear_decay: true,
            clip_norm: Some(1.0),
            mask_context: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Linear warmup to the base rate, then constant or a linear decay
    /// that reaches zero at `steps`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        if !self.linear_decay || self.steps <= self.warmup_steps {
            return self.learning_rate;
        }
        let left = self.steps.saturating_sub(step) as f64;
        self.learning_rate * left / (self.steps - self.warmup_steps) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
