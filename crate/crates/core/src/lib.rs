//! Sensor-tokenized Transformer forecasting for multi-sensor traffic series.
//!
//! Each sensor's `T`-step history becomes one token, so the sequence length
//! grows with the sensor count while the token width stays `T`. The crate
//! carries its own tape-based reverse-mode differentiation ([`tape`]), the
//! network ([`model`]), the windowing pipeline ([`data`]), RAdam training
//! with early stopping ([`training`]) and synthetic generators with naive
//! baselines ([`synthetic`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases at the
//! crate root fix it to `f64`.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod scalar;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::TensorError;
pub use scalar::Scalar;
pub use tape::{BatchNormState, Gradients, NormMode, Tape, Var};
pub use tensor::{set_deterministic, Tensor};

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model = model::Fptn<f64>;
pub type Model32 = model::Fptn<f32>;
pub type Checkpoint = model::Checkpoint<f64>;
pub type Trainer = training::Trainer<f64>;
