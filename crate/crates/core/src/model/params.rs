use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;

/// Standard deviation of the uniform initializer.
pub const INIT_STD: f64 = 0.02;

/// Token embeddings start at the unit scale of the sinusoidal encoding they
/// are summed with; at `INIT_STD` the position signal drowns token identity
/// and the model learns to copy values from the context far more slowly.
pub const EMBEDDING_INIT_STD: f64 = 1.0;

/// Weights of one transformer layer. The per-head projections W_j^{1,2,3}
/// are stored side by side: head j owns columns `j*dh..(j+1)*dh` of
/// `wq`, `wk` and `wv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub ff_u: Array2<f64>,
    pub ff_v: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    pub w_vocab: Array2<f64>,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            ff_u: Array2::zeros((d, f)),
            ff_v: Array2::zeros((f, d)),
        }
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let (d, f, v) = (config.model_dim, config.ff_dim, config.vocab_size);
        Self {
            config,
            token_embedding: Array2::zeros((v, d)),
            layers: (0..config.num_layers).map(|_| LayerParams::zeros(d, f)).collect(),
            final_gain: Array1::zeros(d),
            final_bias: Array1::zeros(d),
            w_vocab: Array2::zeros((d, v)),
        }
    }

    /// Uniform init with standard deviation `std`; layernorm gains 1, biases 0.
    pub fn init(config: ModelConfig, seed: u64, std: f64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = std * 3f64.sqrt();
        for (name, block) in p.blocks_mut() {
            if name.ends_with("gain") {
                block.fill(1.0);
            } else if !name.ends_with("bias") {
                for x in block.iter_mut() {
                    *x = rng.gen_range(-a..a);
                }
            }
        }
        p
    }

    /// Training initialization: `INIT_STD` everywhere except the token
    /// embeddings, which use `EMBEDDING_INIT_STD`.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::init(config, seed, INIT_STD);
        p.token_embedding *= EMBEDDING_INIT_STD / INIT_STD;
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// Every parameter block with a stable name, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("token_embedding".into(), slice(&self.token_embedding))];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.ln1_gain"), slice1(&l.ln1_gain)));
            out.push((format!("layer{i}.ln1_bias"), slice1(&l.ln1_bias)));
            out.push((format!("layer{i}.wq"), slice(&l.wq)));
            out.push((format!("layer{i}.wk"), slice(&l.wk)));
            out.push((format!("layer{i}.wv"), slice(&l.wv)));
            out.push((format!("layer{i}.wo"), slice(&l.wo)));
            out.push((format!("layer{i}.ln2_gain"), slice1(&l.ln2_gain)));
            out.push((format!("layer{i}.ln2_bias"), slice1(&l.ln2_bias)));
            out.push((format!("layer{i}.ff_u"), slice(&l.ff_u)));
            out.push((format!("layer{i}.ff_v"), slice(&l.ff_v)));
        }
        out.push(("final_gain".into(), slice1(&self.final_gain)));
        out.push(("final_bias".into(), slice1(&self.final_bias)));
        out.push(("w_vocab".into(), slice(&self.w_vocab)));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> =
            vec![("token_embedding".into(), slice_mut(&mut self.token_embedding))];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.ln1_gain"), slice1_mut(&mut l.ln1_gain)));
            out.push((format!("layer{i}.ln1_bias"), slice1_mut(&mut l.ln1_bias)));
            out.push((format!("layer{i}.wq"), slice_mut(&mut l.wq)));
            out.push((format!("layer{i}.wk"), slice_mut(&mut l.wk)));
            out.push((format!("layer{i}.wv"), slice_mut(&mut l.wv)));
            out.push((format!("layer{i}.wo"), slice_mut(&mut l.wo)));
            out.push((format!("layer{i}.ln2_gain"), slice1_mut(&mut l.ln2_gain)));
            out.push((format!("layer{i}.ln2_bias"), slice1_mut(&mut l.ln2_bias)));
            out.push((format!("layer{i}.ff_u"), slice_mut(&mut l.ff_u)));
            out.push((format!("layer{i}.ff_v"), slice_mut(&mut l.ff_v)));
        }
        out.push(("final_gain".into(), slice1_mut(&mut self.final_gain)));
        out.push(("final_bias".into(), slice1_mut(&mut self.final_bias)));
        out.push(("w_vocab".into(), slice_mut(&mut self.w_vocab)));
        out
    }

    /// Shapes of every block, in [`blocks`](Self::blocks) order. Vectors are
    /// reported as a single row.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = vec![self.token_embedding.dim()];
        for l in &self.layers {
            let d = l.ln1_gain.len();
            out.extend([
                (1, d),
                (1, d),
                l.wq.dim(),
                l.wk.dim(),
                l.wv.dim(),
                l.wo.dim(),
                (1, d),
                (1, d),
                l.ff_u.dim(),
                l.ff_v.dim(),
            ]);
        }
        let d = self.final_gain.len();
        out.extend([(1, d), (1, d), self.w_vocab.dim()]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, a) in self.blocks_mut() {
            a.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .map(|(_, b)| b.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}
