use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Mean negative log-likelihood: row i of `logits` is scored against
/// `targets[i]`. Callers shift the sequence so that row i predicts token i+1.
pub fn nll_loss(logits: &Array2<f64>, targets: &[TokenId]) -> Result<f64> {
    if logits.nrows() != targets.len() {
        return Err(Error::Shape {
            op: "nll_loss",
            detail: format!("{} logit rows for {} targets", logits.nrows(), targets.len()),
        });
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        if t as usize >= row.len() {
            return Err(Error::TokenOutOfRange {
                id: t,
                size: row.len(),
            });
        }
        total += log_sum_exp(row.iter().copied()) - row[t as usize];
    }
    Ok((total / targets.len() as f64).max(0.0))
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Which target positions count toward the loss. Position 0 is never a
/// target; with `mask_context`, positions up to and including
/// `context_end` are dropped as well.
pub fn loss_mask(len: usize, context_end: Option<usize>, mask_context: bool) -> Vec<bool> {
    (0..len)
        .map(|i| {
            i > 0
                && match (mask_context, context_end) {
                    (true, Some(end)) => i > end,
                    _ => true,
                }
        })
        .collect()
}
