//! Composite layers: convolution wrappers, DropBlock, batch normalization,
//! the three convolutional block flavours and the spatial attention module.

mod attention;
mod batchnorm;
mod block;
pub(crate) mod conv;
mod dropblock;
pub(crate) mod init;

use rand::RngCore;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use attention::{sam_forward, SpatialAttention, SAM_KERNEL};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use block::{BlockVariant, ConvBlock};
pub use conv::{Conv2dLayer, ConvTransposeLayer};
pub use dropblock::{dropblock_forward, dropblock_gamma, sample_block_mask, DropBlockConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// How a forward pass runs: training (stochastic layers draw from `rng`,
/// batch norm uses and updates batch statistics) or evaluation.
pub enum Pass<'a> {
    Train { rng: &'a mut dyn RngCore },
    Eval,
}

impl Pass<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Pass::Train { .. } => Mode::Train,
            Pass::Eval => Mode::Eval,
        }
    }

    pub fn rng(&mut self) -> Option<&mut dyn RngCore> {
        match self {
            Pass::Train { rng } => Some(&mut **rng),
            Pass::Eval => None,
        }
    }
}

/// Receives every parameter tensor of a layer tree.
pub trait ParamVisitor<T: Scalar> {
    fn visit(&mut self, name: &str, tensor: &Tensor<T>, trainable: bool);
}

impl<T: Scalar, F: FnMut(&str, &Tensor<T>, bool)> ParamVisitor<T> for F {
    fn visit(&mut self, name: &str, tensor: &Tensor<T>, trainable: bool) {
        self(name, tensor, trainable)
    }
}

/// Mutable counterpart of [`ParamVisitor`].
pub trait ParamVisitorMut<T: Scalar> {
    fn visit(&mut self, name: &str, tensor: &mut Tensor<T>, trainable: bool);
}

impl<T: Scalar, F: FnMut(&str, &mut Tensor<T>, bool)> ParamVisitorMut<T> for F {
    fn visit(&mut self, name: &str, tensor: &mut Tensor<T>, trainable: bool) {
        self(name, tensor, trainable)
    }
}

/// Layers that own parameters.
pub trait Module<T: Scalar> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>);
    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>);
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
