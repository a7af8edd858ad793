//! Hand-written reverse pass for the masked next-token objective.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;

use super::forward::{forward_trace, ForwardTrace};
use super::loss::log_sum_exp;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// One training sequence with its per-position target mask. `mask[i]` says
/// whether token i is scored (as the prediction of logits row i-1); `mask[0]`
/// is ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<TokenId>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn unmasked(tokens: Vec<TokenId>) -> Self {
        let mask = (0..tokens.len()).map(|i| i > 0).collect();
        Self { tokens, mask }
    }

    pub fn num_targets(&self) -> usize {
        self.mask.iter().skip(1).filter(|&&m| m).count()
    }

    fn check(&self) -> Result<()> {
        if self.mask.len() != self.tokens.len() {
            return Err(Error::Shape {
                op: "example",
                detail: format!("{} tokens, {} mask entries", self.tokens.len(), self.mask.len()),
            });
        }
        Ok(())
    }
}

/// Mean masked NLL over all scored positions of the batch.
pub fn batch_loss(params: &ModelParams, batch: &[Example]) -> Result<f64> {
    let total: usize = batch.iter().map(Example::num_targets).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for ex in batch {
        ex.check()?;
        if ex.num_targets() == 0 {
            continue;
        }
        let logits = super::forward::forward(params, &ex.tokens)?;
        for i in 1..ex.tokens.len() {
            if ex.mask[i] {
                let row = logits.row(i - 1);
                sum += log_sum_exp(row.iter().copied()) - row[ex.tokens[i] as usize];
            }
        }
    }
    Ok(sum / total as f64)
}

/// Gradient of the batch's mean masked NLL with respect to every parameter,
/// along with the loss itself. Sequences are processed in parallel and
/// summed in batch order, so the result does not depend on thread count.
pub fn parameter_gradients(params: &ModelParams, batch: &[Example]) -> Result<(f64, ModelParams)> {
    let total: usize = batch.iter().map(Example::num_targets).sum();
    let mut grads = params.zeros_like();
    if total == 0 {
        for ex in batch {
            ex.check()?;
        }
        return Ok((0.0, grads));
    }
    let norm = total as f64;
    let parts: Vec<Result<Option<(f64, ModelParams)>>> = batch
        .par_iter()
        .map(|ex| {
            ex.check()?;
            if ex.num_targets() == 0 {
                return Ok(None);
            }
            let mut g = params.zeros_like();
            let loss = sequence_gradients(params, ex, norm, &mut g)?;
            Ok(Some((loss, g)))
        })
        .collect();
    let mut loss = 0.0;
    for part in parts {
        if let Some((l, g)) = part? {
            loss += l;
            grads.add_assign(&g);
        }
    }
    Ok((loss / norm, grads))
}

/// Accumulates `d(sum of masked NLL)/norm` for one sequence into `grads`;
/// returns the unnormalized NLL sum.
pub fn sequence_gradients(params: &ModelParams, ex: &Example, norm: f64, grads: &mut ModelParams) -> Result<f64> {
    let trace = forward_trace(params, &ex.tokens)?;
    let (loss, dlogits) = output_gradient(&trace, &ex.mask, norm);
    backward(params, &trace, &dlogits, grads);
    Ok(loss)
}

fn output_gradient(trace: &ForwardTrace, mask: &[bool], norm: f64) -> (f64, Array2<f64>) {
    let (n, v) = trace.logits.dim();
    let mut d = Array2::zeros((n, v));
    let mut loss = 0.0;
    for i in 1..n {
        if !mask[i] {
            continue;
        }
        let row = trace.logits.row(i - 1);
        let t = trace.tokens[i] as usize;
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[t];
        let mut drow = d.row_mut(i - 1);
        for (dst, &z) in drow.iter_mut().zip(row.iter()) {
            *dst = (z - lse).exp() / norm;
        }
        drow[t] -= 1.0 / norm;
    }
    (loss, d)
}

/// Returns dL/dx and accumulates gain and bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    rstd: &[f64],
    gain: &Array1<f64>,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    for (dyr, xr) in dy.rows().into_iter().zip(xhat.rows()) {
        for j in 0..dyr.len() {
            dgain[j] += dyr[j] * xr[j];
            dbias[j] += dyr[j];
        }
    }
    let mut dx = dy * gain;
    for ((mut row, xr), &r) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(rstd) {
        let m1 = row.sum() / d;
        let m2 = row.iter().zip(xr.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (v, &x) in row.iter_mut().zip(xr.iter()) {
            *v = r * (*v - m1 - x * m2);
        }
    }
    dx
}

fn backward(params: &ModelParams, tr: &ForwardTrace, dlogits: &Array2<f64>, g: &mut ModelParams) {
    let c = &params.config;
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    general_mat_mul(1.0, &tr.final_out.t(), dlogits, 1.0, &mut g.w_vocab);
    let dy = dlogits.dot(&params.w_vocab.t());
    let mut dx = layer_norm_backward(
        &dy,
        &tr.final_xhat,
        &tr.final_rstd,
        &params.final_gain,
        g.final_gain.as_slice_mut().unwrap(),
        g.final_bias.as_slice_mut().unwrap(),
    );

    for ((lp, lt), gl) in params.layers.iter().zip(&tr.layers).zip(g.layers.iter_mut()).rev() {
        // Feed-forward block: X' = relu(H̄U)V + H̄.
        general_mat_mul(1.0, &lt.relu.t(), &dx, 1.0, &mut gl.ff_v);
        let mut dz = dx.dot(&lp.ff_v.t());
        ndarray::Zip::from(&mut dz)
            .and(&lt.pre_relu)
            .for_each(|d, &z| if z <= 0.0 { *d = 0.0 });
        general_mat_mul(1.0, &lt.hbar.t(), &dz, 1.0, &mut gl.ff_u);
        let mut dhbar = dx;
        general_mat_mul(1.0, &dz, &lp.ff_u.t(), 1.0, &mut dhbar);
        let dh_res = layer_norm_backward(
            &dhbar,
            &lt.xhat2,
            &lt.rstd2,
            &lp.ln2_gain,
            gl.ln2_gain.as_slice_mut().unwrap(),
            gl.ln2_bias.as_slice_mut().unwrap(),
        );

        // Attention block: H = MultiHead(X̄) + X̄.
        general_mat_mul(1.0, &lt.heads.t(), &dh_res, 1.0, &mut gl.wo);
        let dheads = dh_res.dot(&lp.wo.t());
        let mut dxbar = dh_res;
        let n = dheads.nrows();
        let mut dq = Array2::zeros((n, c.model_dim));
        let mut dk = Array2::zeros((n, c.model_dim));
        let mut dv = Array2::zeros((n, c.model_dim));
        for (h, p) in lt.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let doh = dheads.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            let mut ds = doh.dot(&lt.v.slice(cols).t());
            for i in 0..n {
                let pr = p.row(i);
                let mut dr = ds.row_mut(i);
                let dot: f64 = (0..=i).map(|j| pr[j] * dr[j]).sum();
                for j in 0..=i {
                    dr[j] = pr[j] * (dr[j] - dot) * scale;
                }
                for j in i + 1..n {
                    dr[j] = 0.0;
                }
            }
            dq.slice_mut(cols).assign(&ds.dot(&lt.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lt.q.slice(cols)));
        }
        general_mat_mul(1.0, &lt.xbar.t(), &dq, 1.0, &mut gl.wq);
        general_mat_mul(1.0, &lt.xbar.t(), &dk, 1.0, &mut gl.wk);
        general_mat_mul(1.0, &lt.xbar.t(), &dv, 1.0, &mut gl.wv);
        general_mat_mul(1.0, &dq, &lp.wq.t(), 1.0, &mut dxbar);
        general_mat_mul(1.0, &dk, &lp.wk.t(), 1.0, &mut dxbar);
        general_mat_mul(1.0, &dv, &lp.wv.t(), 1.0, &mut dxbar);
        dx = layer_norm_backward(
            &dxbar,
            &lt.xhat1,
            &lt.rstd1,
            &lp.ln1_gain,
            gl.ln1_gain.as_slice_mut().unwrap(),
            gl.ln1_bias.as_slice_mut().unwrap(),
        );
    }

    for (i, &t) in tr.tokens.iter().enumerate() {
        let mut row = g.token_embedding.row_mut(t as usize);
        row += &dx.index_axis(Axis(0), i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            num_heads: 2,
            model_dim: 4,
            ff_dim: 6,
            vocab_size: 7,
            max_len: 8,
        }
    }

    #[test]
    fn empty_mask_gives_zero_gradients() {
        let p = ModelParams::init(tiny(), 1, 0.5);
        let ex = Example {
            tokens: vec![1, 2, 3],
            mask: vec![false; 3],
        };
        let (loss, g) = parameter_gradients(&p, &[ex]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.squared_norm(), 0.0);
    }

    #[test]
    fn loss_matches_batch_loss() {
        let p = ModelParams::init(tiny(), 2, 0.5);
        let batch = vec![Example::unmasked(vec![1, 2, 3, 4]), Example::unmasked(vec![6, 5])];
        let (loss, _) = parameter_gradients(&p, &batch).unwrap();
        assert!((loss - batch_loss(&p, &batch).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spot_check_against_central_differences() {
        let p = ModelParams::init(tiny(), 3, 0.5);
        let batch = vec![Example::unmasked(vec![1, 2, 3, 1, 5])];
        let (_, g) = parameter_gradients(&p, &batch).unwrap();
        let h = 1e-5;
        let analytic = g.blocks();
        for (bi, (name, block)) in analytic.iter().enumerate() {
            for idx in [0, block.len() / 2, block.len() - 1] {
                let mut plus = p.clone();
                plus.blocks_mut()[bi].1[idx] += h;
                let mut minus = p.clone();
                minus.blocks_mut()[bi].1[idx] -= h;
                let num = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap()) / (2.0 * h);
                let a = block[idx];
                let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                assert!(err < 1e-4, "{name}[{idx}]: analytic {a}, numeric {num}");
            }
        }
    }
}
