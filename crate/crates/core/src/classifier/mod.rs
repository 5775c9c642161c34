//! Two-tower convolution + attention classifier over raw windows and their
//! log-magnitude spectra.
//!
//! Each tower runs a temporal convolution, a cross-channel convolution, layer
//! norm and GELU, adds a learned absolute position table, then applies
//! self-attention blocks with a per-head relative position bias inside the
//! softmax, each followed by a feed-forward layer. The mean-pooled embeddings
//! of both towers are concatenated and mapped to class logits.

mod network;
mod params;
mod store;
mod train;

pub use network::attention_maps;
pub use params::{init, ModelConfig, ModelParams, Towers};
pub use store::{read_params, write_params};
pub use train::{
    class_weights, forward, loss_and_grad, predict, train, train_from, Prediction, TrainHyper, TrainReport,
};
