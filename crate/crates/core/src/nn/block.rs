use rand::Rng;

use super::conv::WeightInit;
use super::{join, BatchNorm, Conv2dLayer, DropBlockConfig, Module, ParamVisitor, ParamVisitorMut, Pass};
use crate::error::Result;
use crate::nn::dropblock_forward;
use crate::scalar::Scalar;
use crate::tensor::{activation, Activation, Tensor};

/// Post-convolution pipeline of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BlockVariant {
    /// conv → ReLU (original U-Net).
    Plain,
    /// conv → DropBlock → ReLU (SD-UNet).
    DropBlock,
    /// conv → DropBlock → BN → ReLU (structured dropout convolutional block).
    Structured,
}

/// Two 3x3 same-padded convolutions, each followed by the variant's pipeline.
#[derive(Clone, Debug)]
pub struct ConvBlock<T: Scalar> {
    pub convs: [Conv2dLayer<T>; 2],
    pub norms: Option<[BatchNorm<T>; 2]>,
    pub variant: BlockVariant,
    pub dropblock: DropBlockConfig,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        cin: usize,
        cout: usize,
        variant: BlockVariant,
        dropblock: DropBlockConfig,
    ) -> Result<Self> {
        let convs = [
            Conv2dLayer::init(rng, cin, cout, 3, true, WeightInit::He)?,
            Conv2dLayer::init(rng, cout, cout, 3, true, WeightInit::He)?,
        ];
        let norms = match variant {
            BlockVariant::Structured => Some([BatchNorm::new(cout)?, BatchNorm::new(cout)?]),
            _ => None,
        };
        Ok(ConvBlock {
            convs,
            norms,
            variant,
            dropblock,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.convs[1].out_channels()
    }

    pub fn forward(&mut self, x: &Tensor<T>, pass: &mut Pass<'_>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for i in 0..2 {
            h = self.convs[i].forward(&h)?;
            if self.variant != BlockVariant::Plain {
                h = dropblock_forward(&h, &self.dropblock, pass.rng())?;
            }
            if let Some(norms) = &mut self.norms {
                h = match pass {
                    Pass::Train { .. } => norms[i].forward_train(&h)?,
                    Pass::Eval => norms[i].forward_eval(&h)?,
                };
            }
            h = activation(&h, Activation::Relu)?;
        }
        Ok(h)
    }

    /// Evaluation-mode forward that leaves the block untouched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for i in 0..2 {
            h = self.convs[i].forward(&h)?;
            if let Some(norms) = &self.norms {
                h = norms[i].forward_eval(&h)?;
            }
            h = activation(&h, Activation::Relu)?;
        }
        Ok(h)
    }
}

impl<T: Scalar> Module<T> for ConvBlock<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        for (i, conv) in self.convs.iter().enumerate() {
            conv.visit_params(&join(prefix, &format!("conv{}", i + 1)), v);
            if let Some(norms) = &self.norms {
                norms[i].visit_params(&join(prefix, &format!("bn{}", i + 1)), v);
            }
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit_params_mut(&join(prefix, &format!("conv{}", i + 1)), v);
            if let Some(norms) = &mut self.norms {
                norms[i].visit_params_mut(&join(prefix, &format!("bn{}", i + 1)), v);
            }
        }
    }
}
