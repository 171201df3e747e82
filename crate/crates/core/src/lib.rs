//! Spatial-attention U-Net (SA-UNet) and its ablation variants for binary
//! vessel segmentation, built on a small reverse-mode autodiff engine.
//!
//! All numeric code is generic over [`Scalar`] (`f32` for training, `f64`
//! for gradient verification); the aliases below fix the common choices.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
pub use scalar::{DType, Scalar};
pub use tensor::{IntoShape, Shape, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = model::Network<f32>;
pub type Network64 = model::Network<f64>;
pub type Sample32 = data::FundusSample<f32>;
pub type Sample64 = data::FundusSample<f64>;
