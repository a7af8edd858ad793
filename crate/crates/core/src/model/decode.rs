//! Incremental greedy decoding with a key/value cache.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::forward::{check_tokens, forward_trace, layer_norm};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Cached keys and values of every layer, one row per processed position.
#[derive(Debug, Clone)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
    dim: usize,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn view<'a>(&self, buf: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.len, self.dim), buf).expect("cache rows are complete")
    }
}

/// A decoding session: the cache plus the logits for the next position.
#[derive(Debug, Clone)]
pub struct Decoder<'p> {
    params: &'p ModelParams,
    cache: KvCache,
    next_logits: Array1<f64>,
}

impl<'p> Decoder<'p> {
    /// Runs the prompt through the model in one batched pass.
    pub fn new(params: &'p ModelParams, prefix: &[TokenId]) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::InvalidArgument("decoding needs a nonempty prefix".into()));
        }
        let trace = forward_trace(params, prefix)?;
        let d = params.config.model_dim;
        let cache = KvCache {
            keys: trace.layers.iter().map(|l| l.k.iter().copied().collect()).collect(),
            values: trace.layers.iter().map(|l| l.v.iter().copied().collect()).collect(),
            len: prefix.len(),
            dim: d,
        };
        let next_logits = trace.logits.row(prefix.len() - 1).to_owned();
        Ok(Self {
            params,
            cache,
            next_logits,
        })
    }

    pub fn position(&self) -> usize {
        self.cache.len
    }

    pub fn logits(&self) -> &Array1<f64> {
        &self.next_logits
    }

    /// Appends one token and computes the logits that follow it.
    pub fn push(&mut self, token: TokenId) -> Result<()> {
        check_tokens(self.params, &[token])?;
        let c = &self.params.config;
        let pos = self.cache.len;
        if pos >= c.max_len {
            return Err(Error::SequenceTooLong {
                len: pos + 1,
                max: c.max_len,
            });
        }
        let (d, dh) = (c.model_dim, c.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = Array2::zeros((1, d));
        x.row_mut(0).assign(&self.params.token_embedding.row(token as usize));
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            x[[0, 2 * i]] += angle.sin();
            x[[0, 2 * i + 1]] += angle.cos();
        }
        self.cache.len += 1;
        for (l, lp) in self.params.layers.iter().enumerate() {
            let (xbar, _, _) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
            let q = xbar.dot(&lp.wq);
            self.cache.keys[l].extend(xbar.dot(&lp.wk).iter());
            self.cache.values[l].extend(xbar.dot(&lp.wv).iter());
            let keys = self.cache.view(&self.cache.keys[l]);
            let values = self.cache.view(&self.cache.values[l]);
            let mut heads = Array2::zeros((1, d));
            for h in 0..c.num_heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores: Array1<f64> = keys.slice(cols).dot(&q.slice(s![0, h * dh..(h + 1) * dh])) * scale;
                let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                scores.mapv_inplace(|v| (v - max).exp());
                let sum = scores.sum();
                scores.mapv_inplace(|v| v / sum);
                heads
                    .slice_mut(s![0, h * dh..(h + 1) * dh])
                    .assign(&scores.dot(&values.slice(cols)));
            }
            let h_res = heads.dot(&lp.wo) + &xbar;
            let (hbar, _, _) = layer_norm(&h_res, &lp.ln2_gain, &lp.ln2_bias);
            let relu = hbar.dot(&lp.ff_u).mapv(|z| z.max(0.0));
            x = relu.dot(&lp.ff_v) + &hbar;
        }
        let (y, _, _) = layer_norm(&x, &self.params.final_gain, &self.params.final_bias);
        self.next_logits = y.row(0).dot(&self.params.w_vocab);
        Ok(())
    }

    /// Greedily extends the sequence until a stop token (kept in the
    /// output), `max_new` tokens, or the position limit.
    pub fn generate(&mut self, stop: &[TokenId], max_new: usize) -> Result<Vec<TokenId>> {
        let max_len = self.params.config.max_len;
        let mut out = Vec::new();
        while out.len() < max_new && self.cache.len < max_len {
            let next = argmax(&self.next_logits);
            out.push(next);
            self.push(next)?;
            if stop.contains(&next) {
                break;
            }
        }
        Ok(out)
    }
}

/// Index of the largest entry; ties go to the lowest id.
pub fn argmax(logits: &Array1<f64>) -> TokenId {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Greedy continuation of `prefix`; returns only the new tokens.
pub fn greedy_decode(params: &ModelParams, prefix: &[TokenId], stop: &[TokenId], max_new: usize) -> Result<Vec<TokenId>> {
    if max_new == 0 || prefix.len() >= params.config.max_len {
        check_tokens(params, &prefix[..prefix.len().min(params.config.max_len)])?;
        return Ok(Vec::new());
    }
    let mut dec = Decoder::new(params, prefix)?;
    dec.generate(stop, max_new)
}
