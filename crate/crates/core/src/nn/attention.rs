use rand::Rng;

use super::conv::WeightInit;
use super::{join, Conv2dLayer, Module, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    activation, channel_reduce, concat_channels, conv2d, mul_channel_broadcast, Activation, Padding, Reduction,
    Tensor,
};

pub const SAM_KERNEL: usize = 7;

/// Spatial attention: a bias-free 7x7 convolution over the stacked channel
/// max and channel mean, squashed by a sigmoid into a per-pixel gate.
#[derive(Clone, Debug)]
pub struct SpatialAttention<T: Scalar> {
    /// Shape `[1, 2, 7, 7]`; input channel 0 sees the max map, 1 the mean map.
    pub weight: Tensor<T>,
}

impl<T: Scalar> SpatialAttention<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        let conv = Conv2dLayer::init(rng, 2, 1, SAM_KERNEL, false, WeightInit::Glorot)?;
        Ok(SpatialAttention { weight: conv.weight })
    }

    pub fn from_weight(weight: Tensor<T>) -> Result<Self> {
        if weight.dims() != [1, 2, SAM_KERNEL, SAM_KERNEL] {
            return Err(Error::shape(format!(
                "attention weight must be [1, 2, 7, 7], got {:?}",
                weight.shape()
            )));
        }
        Ok(SpatialAttention { weight })
    }

    /// The gate `M` of shape `[n, 1, h, w]`, strictly inside (0, 1).
    pub fn attention_map(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let max = channel_reduce(x, Reduction::Max)?;
        let avg = channel_reduce(x, Reduction::Mean)?;
        let stacked = concat_channels(&max, &avg)?;
        let logits = conv2d(&stacked, &self.weight, None, 1, Padding::Same)?;
        activation(&logits, Activation::Sigmoid)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        sam_forward(x, self)
    }
}

/// `F * M(F)` with the gate broadcast over channels.
pub fn sam_forward<T: Scalar>(input: &Tensor<T>, state: &SpatialAttention<T>) -> Result<Tensor<T>> {
    let map = state.attention_map(input)?;
    mul_channel_broadcast(input, &map)
}

impl<T: Scalar> Module<T> for SpatialAttention<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.visit(&join(prefix, "weight"), &self.weight, true);
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        v.visit(&join(prefix, "weight"), &mut self.weight, true);
    }
}
