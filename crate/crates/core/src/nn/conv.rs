use rand::Rng;

use super::{init, join, Module, ParamVisitor, ParamVisitorMut};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{conv2d, conv2d_transpose, Padding, Tensor};

/// Same-padded, stride-1 convolution with optional bias.
#[derive(Clone, Debug)]
pub struct Conv2dLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum WeightInit {
    He,
    Glorot,
}

impl<T: Scalar> Conv2dLayer<T> {
    pub(crate) fn init<R: Rng + ?Sized>(
        rng: &mut R,
        cin: usize,
        cout: usize,
        kernel: usize,
        bias: bool,
        scheme: WeightInit,
    ) -> Result<Self> {
        let count = cout * cin * kernel * kernel;
        let fan_in = cin * kernel * kernel;
        let data = match scheme {
            WeightInit::He => init::he_normal(rng, count, fan_in),
            WeightInit::Glorot => init::glorot_uniform(rng, count, fan_in, cout * kernel * kernel),
        };
        Ok(Conv2dLayer {
            weight: Tensor::from_vec([cout, cin, kernel, kernel], data)?.requires_grad(),
            bias: if bias {
                Some(Tensor::<T>::zeros([cout])?.requires_grad())
            } else {
                None
            },
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), 1, Padding::Same)
    }
}

impl<T: Scalar> Module<T> for Conv2dLayer<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.visit(&join(prefix, "weight"), &self.weight, true);
        if let Some(b) = &self.bias {
            v.visit(&join(prefix, "bias"), b, true);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        v.visit(&join(prefix, "weight"), &mut self.weight, true);
        if let Some(b) = &mut self.bias {
            v.visit(&join(prefix, "bias"), b, true);
        }
    }
}

/// Stride-2 transposed convolution that doubles spatial size.
#[derive(Clone, Debug)]
pub struct ConvTransposeLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvTransposeLayer<T> {
    pub(crate) fn init<R: Rng + ?Sized>(rng: &mut R, cin: usize, cout: usize, kernel: usize) -> Result<Self> {
        // Each output pixel sees roughly a quarter of the kernel taps at stride 2.
        let fan_in = (cin * kernel * kernel / 4).max(1);
        let data = init::he_normal(rng, cin * cout * kernel * kernel, fan_in);
        Ok(ConvTransposeLayer {
            weight: Tensor::from_vec([cin, cout, kernel, kernel], data)?.requires_grad(),
            bias: Tensor::<T>::zeros([cout])?.requires_grad(),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_transpose(x, &self.weight, Some(&self.bias), 2)
    }
}

impl<T: Scalar> Module<T> for ConvTransposeLayer<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.visit(&join(prefix, "weight"), &self.weight, true);
        v.visit(&join(prefix, "bias"), &self.bias, true);
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        v.visit(&join(prefix, "weight"), &mut self.weight, true);
        v.visit(&join(prefix, "bias"), &mut self.bias, true);
    }
}
