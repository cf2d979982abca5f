//! The forecasting network: three input embeddings summed into one token
//! per sensor, a post-norm Transformer encoder with batch normalization,
//! and a linear head producing `K` steps per sensor.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, PositionalMode};
pub use network::{
    build_time_embedding, compose_input, embed_traffic, encoder_layer, feed_forward, mae_loss,
    multi_head_attention, positional_embedding, scaled_dot_attention, Dropout, ForwardPass, Fptn,
    LayerVars, ParamVars,
};
pub use params::{sinusoidal_table, LayerParams, ModelParams, POSITIONAL_INIT_STD};
