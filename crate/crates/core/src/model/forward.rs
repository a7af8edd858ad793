use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Sinusoidal position table: `(pos, 2i) = sin(pos / 10000^(2i/d))` and
/// `(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(n: usize, d: usize) -> Result<Array2<f64>> {
    if n == 0 || d == 0 || d % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "positional encoding needs n >= 1 and even d >= 2, got n={n}, d={d}"
        )));
    }
    let mut pe = Array2::zeros((n, d));
    for i in 0..d / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / d as f64);
        for pos in 0..n {
            let angle = pos as f64 / freq;
            pe[[pos, 2 * i]] = angle.sin();
            pe[[pos, 2 * i + 1]] = angle.cos();
        }
    }
    Ok(pe)
}

/// Row-wise layer normalization. Returns the output together with the
/// normalized input and reciprocal standard deviations needed by backprop.
pub fn layer_norm(
    x: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * r);
        rstd.push(r);
    }
    let y = &xhat * gain + bias;
    (y, xhat, rstd)
}

/// Masked softmax of `q kᵀ * scale`: entries above the diagonal are −∞
/// before normalization and exactly zero after.
pub(crate) fn causal_probs(q: ArrayView2<f64>, k: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    let n = q.nrows();
    let mut scores = q.dot(&k.t());
    for i in 0..n {
        let mut row = scores.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..=i {
            row[j] *= scale;
            max = max.max(row[j]);
        }
        let mut sum = 0.0;
        for j in 0..=i {
            row[j] = (row[j] - max).exp();
            sum += row[j];
        }
        for j in 0..=i {
            row[j] /= sum;
        }
        for j in i + 1..n {
            row[j] = 0.0;
        }
    }
    scores
}

/// `softmax(mask(X Yᵀ) / √d') Z` for a single head of width `d' = X.ncols()`.
pub fn causal_attention(x: &Array2<f64>, y: &Array2<f64>, z: &Array2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if y.nrows() != n || z.nrows() != n || x.ncols() != y.ncols() || x.ncols() == 0 {
        return Err(Error::Shape {
            op: "causal_attention",
            detail: format!("X {:?}, Y {:?}, Z {:?}", x.dim(), y.dim(), z.dim()),
        });
    }
    let scale = 1.0 / (x.ncols() as f64).sqrt();
    Ok(causal_probs(x.view(), y.view(), scale).dot(z))
}

/// Intermediate values of one layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub xhat1: Array2<f64>,
    pub rstd1: Vec<f64>,
    pub xbar: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Attention weights per head, each n×n.
    pub probs: Vec<Array2<f64>>,
    pub heads: Array2<f64>,
    pub xhat2: Array2<f64>,
    pub rstd2: Vec<f64>,
    pub hbar: Array2<f64>,
    pub pre_relu: Array2<f64>,
    pub relu: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub tokens: Vec<TokenId>,
    pub layers: Vec<LayerTrace>,
    pub final_xhat: Array2<f64>,
    pub final_rstd: Vec<f64>,
    pub final_out: Array2<f64>,
    pub logits: Array2<f64>,
}

pub(crate) fn check_tokens(params: &ModelParams, tokens: &[TokenId]) -> Result<()> {
    let c = &params.config;
    if tokens.len() > c.max_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max: c.max_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id: bad,
            size: c.vocab_size,
        });
    }
    Ok(())
}

pub(crate) fn embed(params: &ModelParams, tokens: &[TokenId], start: usize) -> Array2<f64> {
    let d = params.config.model_dim;
    let pe = positional_encoding(start + tokens.len().max(1), d).expect("validated config");
    let mut x = Array2::zeros((tokens.len(), d));
    for (i, &t) in tokens.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.assign(&params.token_embedding.row(t as usize));
        row += &pe.row(start + i);
    }
    x
}

/// Full forward pass keeping every intermediate. Input must be nonempty.
pub fn forward_trace(params: &ModelParams, tokens: &[TokenId]) -> Result<ForwardTrace> {
    check_tokens(params, tokens)?;
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("forward pass on an empty sequence".into()));
    }
    let c = &params.config;
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut x = embed(params, tokens, 0);
    let mut layers = Vec::with_capacity(c.num_layers);
    for lp in &params.layers {
        let (xbar, xhat1, rstd1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = xbar.dot(&lp.wq);
        let k = xbar.dot(&lp.wk);
        let v = xbar.dot(&lp.wv);
        let mut heads = Array2::zeros(q.dim());
        let mut probs = Vec::with_capacity(c.num_heads);
        for h in 0..c.num_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = causal_probs(q.slice(cols), k.slice(cols), scale);
            heads.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let h_res = heads.dot(&lp.wo) + &xbar;
        let (hbar, xhat2, rstd2) = layer_norm(&h_res, &lp.ln2_gain, &lp.ln2_bias);
        let pre_relu = hbar.dot(&lp.ff_u);
        let relu = pre_relu.mapv(|z| z.max(0.0));
        x = relu.dot(&lp.ff_v) + &hbar;
        layers.push(LayerTrace {
            xhat1,
            rstd1,
            xbar,
            q,
            k,
            v,
            probs,
            heads,
            xhat2,
            rstd2,
            hbar,
            pre_relu,
            relu,
        });
    }
    let (final_out, final_xhat, final_rstd) = layer_norm(&x, &params.final_gain, &params.final_bias);
    let logits = final_out.dot(&params.w_vocab);
    Ok(ForwardTrace {
        tokens: tokens.to_vec(),
        layers,
        final_xhat,
        final_rstd,
        final_out,
        logits,
    })
}

/// Logits for every position: row i scores the token at position i + 1.
pub fn forward(params: &ModelParams, tokens: &[TokenId]) -> Result<Array2<f64>> {
    if tokens.is_empty() {
        check_tokens(params, tokens)?;
        return Ok(Array2::zeros((0, params.config.vocab_size)));
    }
    Ok(forward_trace(params, tokens)?.logits)
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}
