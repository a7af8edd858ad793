//! Causal decoder-only transformer in 64-bit floats, with a hand-written
//! backward pass, Adam training and cached greedy decoding.
//!
//! Each layer is two pre-normalized residual blocks whose skip connection
//! carries the *normalized* input:
//!
//! ```text
//! X̄ = LN(X)    H  = MultiHead(X̄) + X̄
//! H̄ = LN(H)    X' = max(0, H̄U)V + H̄
//! ```
//!
//! and the scores are `LN(X_l) W_vocab`. There are no bias terms outside the
//! layer norms.

pub mod backward;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod forward;
pub mod loss;
pub mod optim;
pub mod params;
pub mod train;

pub use backward::{batch_loss, parameter_gradients, Example};
pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, TrainConfig};
pub use decode::{greedy_decode, Decoder};
pub use forward::{causal_attention, forward, positional_encoding};
pub use loss::nll_loss;
pub use params::ModelParams;
pub use train::{make_examples, train, train_with, TrainReport};
