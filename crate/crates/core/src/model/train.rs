use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::{parameter_gradients, Example};
use super::config::TrainConfig;
use super::loss::loss_mask;
use super::optim::Adam;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss at each step, before that step's update.
    pub losses: Vec<f64>,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Writes the `step,loss` curve.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "loss"])?;
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([i.to_string(), format!("{l:.10}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Turns token sequences into training examples, truncating to `max_len`.
/// `context_end` marks the token closing the context segment; it matters only
/// with `mask_context`.
pub fn make_examples(
    sequences: &[Vec<TokenId>],
    max_len: usize,
    context_end: Option<TokenId>,
    mask_context: bool,
) -> Vec<Example> {
    sequences
        .iter()
        .map(|seq| {
            let tokens: Vec<TokenId> = seq.iter().copied().take(max_len).collect();
            let end = context_end.and_then(|c| tokens.iter().position(|&t| t == c));
            let mask = loss_mask(tokens.len(), end, mask_context);
            Example { tokens, mask }
        })
        .collect()
}

pub fn train(params: &mut ModelParams, examples: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(params, examples, cfg, |_, _| {})
}

/// Minibatch Adam over shuffled epochs. Deterministic given `cfg.seed`.
pub fn train_with(
    params: &mut ModelParams,
    examples: &[Example],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut adam = Adam::new(params);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        while batch.len() < cfg.batch_size.min(examples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(examples[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, mut grads) = parameter_gradients(params, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        if let Some(max) = cfg.clip_norm {
            let norm = grads.squared_norm().sqrt();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        adam.step(params, &grads, cfg.learning_rate_at(step), cfg);
        losses.push(loss);
        on_step(step, loss);
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: cfg.steps,
            loss: f64::NAN,
        });
    }
    Ok(TrainReport {
        losses,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
