use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ArchitectureSpec, ParameterReport};
use crate::error::{Error, Result};
use crate::nn::{
    join, ConvBlock, Conv2dLayer, ConvTransposeLayer, Module, ParamVisitor, ParamVisitorMut, Pass,
    SpatialAttention,
};
use crate::scalar::Scalar;
use crate::tensor::{activation, concat_channels, maxpool2d, Activation, Tensor};

/// U-shaped encoder/decoder with optional spatial attention at the bottleneck.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    spec: ArchitectureSpec,
    pub encoders: Vec<ConvBlock<T>>,
    pub bottleneck: ConvBlock<T>,
    pub attention: Option<SpatialAttention<T>>,
    /// Up-sampling layers, deepest first.
    pub upconvs: Vec<ConvTransposeLayer<T>>,
    /// Decoder blocks, deepest first.
    pub decoders: Vec<ConvBlock<T>>,
    pub head: Conv2dLayer<T>,
}

/// Instantiates `spec` with weights drawn deterministically from `seed`.
pub fn build_variant<T: Scalar>(spec: &ArchitectureSpec, seed: u64) -> Result<Network<T>> {
    Network::new(spec.clone(), seed)
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = spec.variant.block();
        let db = spec.dropblock;

        let mut encoders = Vec::with_capacity(spec.depth);
        let mut cin = spec.in_channels;
        for i in 0..spec.depth {
            let cout = spec.stage_channels(i);
            encoders.push(ConvBlock::new(&mut rng, cin, cout, block, db)?);
            cin = cout;
        }
        let bottom = spec.stage_channels(spec.depth);
        let bottleneck = ConvBlock::new(&mut rng, cin, bottom, block, db)?;
        let attention = if spec.variant.has_attention() {
            Some(SpatialAttention::new(&mut rng)?)
        } else {
            None
        };

        let mut upconvs = Vec::with_capacity(spec.depth);
        let mut decoders = Vec::with_capacity(spec.depth);
        let mut cin = bottom;
        for i in (0..spec.depth).rev() {
            let cout = spec.stage_channels(i);
            upconvs.push(ConvTransposeLayer::init(&mut rng, cin, cout, spec.upconv_kernel)?);
            decoders.push(ConvBlock::new(&mut rng, 2 * cout, cout, block, db)?);
            cin = cout;
        }
        let head = Conv2dLayer::init(
            &mut rng,
            spec.base_channels,
            spec.out_channels,
            1,
            true,
            crate::nn::conv::WeightInit::Glorot,
        )?;
        Ok(Network {
            spec,
            encoders,
            bottleneck,
            attention,
            upconvs,
            decoders,
            head,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.nchw()?;
        if c != self.spec.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let m = self.spec.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::shape(format!(
                "input size {h}x{w} is not divisible by {m}"
            )));
        }
        Ok(())
    }

    /// Probability map `[n, out, h, w]`. Training passes update batch-norm
    /// moving statistics and draw DropBlock masks from the pass's generator.
    pub fn forward(&mut self, x: &Tensor<T>, pass: &mut Pass<'_>) -> Result<Tensor<T>> {
        if let Pass::Eval = pass {
            return self.infer(x);
        }
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.spec.depth);
        let mut h = x.clone();
        for enc in &mut self.encoders {
            h = enc.forward(&h, pass)?;
            skips.push(h.clone());
            h = maxpool2d(&h)?;
        }
        h = self.bottleneck.forward(&h, pass)?;
        if let Some(sam) = &self.attention {
            h = sam.forward(&h)?;
        }
        for (up, dec) in self.upconvs.iter().zip(&mut self.decoders) {
            let u = up.forward(&h)?;
            let skip = skips.pop().expect("one skip per stage");
            h = dec.forward(&concat_channels(&skip, &u)?, pass)?;
        }
        activation(&self.head.forward(&h)?, Activation::Sigmoid)
    }

    /// Evaluation-mode forward; never mutates the network.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.spec.depth);
        let mut h = x.clone();
        for enc in &self.encoders {
            h = enc.infer(&h)?;
            skips.push(h.clone());
            h = maxpool2d(&h)?;
        }
        h = self.bottleneck.infer(&h)?;
        if let Some(sam) = &self.attention {
            h = sam.forward(&h)?;
        }
        for (up, dec) in self.upconvs.iter().zip(&self.decoders) {
            let u = up.forward(&h)?;
            let skip = skips.pop().expect("one skip per stage");
            h = dec.infer(&concat_channels(&skip, &u)?)?;
        }
        activation(&self.head.forward(&h)?, Activation::Sigmoid)
    }

    /// All parameter tensors in a fixed order: `(name, tensor, trainable)`.
    pub fn parameters(&self) -> Vec<(String, Tensor<T>, bool)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name: &str, t: &Tensor<T>, trainable: bool| {
            out.push((name.to_string(), t.clone(), trainable));
        });
        out
    }

    pub fn trainable_parameters(&self) -> Vec<(String, Tensor<T>)> {
        self.parameters()
            .into_iter()
            .filter(|(_, _, trainable)| *trainable)
            .map(|(n, t, _)| (n, t))
            .collect()
    }

    pub fn count_params(&self) -> ParameterReport {
        let params = self.parameters();
        ParameterReport::from_tensors(params.iter().map(|(n, t, tr)| (n.as_str(), t.numel(), *tr)))
    }

    /// Replaces trainable parameters, in [`Network::trainable_parameters`] order.
    pub fn set_trainable(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let expected = self.trainable_parameters().len();
        if values.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} trainable tensors, got {}",
                values.len()
            )));
        }
        let mut idx = 0;
        let mut err = None;
        self.visit_params_mut("", &mut |name: &str, t: &mut Tensor<T>, trainable: bool| {
            if !trainable {
                return;
            }
            let v = &values[idx];
            idx += 1;
            if v.shape() != t.shape() {
                err.get_or_insert_with(|| {
                    Error::shape(format!("{name}: shape {:?} expected {:?}", v.shape(), t.shape()))
                });
                return;
            }
            *t = v.clone();
        });
        err.map_or(Ok(()), Err)
    }

    /// Replaces the named tensor (trainable or not), keeping gradient tracking
    /// consistent with its role.
    pub fn set_parameter(&mut self, target: &str, value: Tensor<T>) -> Result<()> {
        let mut result = Err(Error::invalid(format!("no parameter named {target}")));
        self.visit_params_mut("", &mut |name: &str, t: &mut Tensor<T>, trainable: bool| {
            if name != target {
                return;
            }
            result = if value.shape() != t.shape() {
                Err(Error::shape(format!(
                    "{name}: shape {:?} expected {:?}",
                    value.shape(),
                    t.shape()
                )))
            } else {
                *t = value.with_requires_grad(trainable);
                Ok(())
            };
        });
        result
    }

    pub fn zero_grad(&self) {
        for (_, t, _) in self.parameters() {
            t.zero_grad();
        }
    }
}

impl<T: Scalar> Module<T> for Network<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        for (i, enc) in self.encoders.iter().enumerate() {
            enc.visit_params(&join(prefix, &format!("enc{}", i + 1)), v);
        }
        self.bottleneck.visit_params(&join(prefix, "bottleneck"), v);
        if let Some(sam) = &self.attention {
            sam.visit_params(&join(prefix, "sam"), v);
        }
        let depth = self.spec.depth;
        for (k, (up, dec)) in self.upconvs.iter().zip(&self.decoders).enumerate() {
            let stage = depth - k;
            up.visit_params(&join(prefix, &format!("up{stage}")), v);
            dec.visit_params(&join(prefix, &format!("dec{stage}")), v);
        }
        self.head.visit_params(&join(prefix, "head"), v);
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.visit_params_mut(&join(prefix, &format!("enc{}", i + 1)), v);
        }
        self.bottleneck.visit_params_mut(&join(prefix, "bottleneck"), v);
        if let Some(sam) = &mut self.attention {
            sam.visit_params_mut(&join(prefix, "sam"), v);
        }
        let depth = self.spec.depth;
        for (k, (up, dec)) in self.upconvs.iter_mut().zip(&mut self.decoders).enumerate() {
            let stage = depth - k;
            up.visit_params_mut(&join(prefix, &format!("up{stage}")), v);
            dec.visit_params_mut(&join(prefix, &format!("dec{stage}")), v);
        }
        self.head.visit_params_mut(&join(prefix, "head"), v);
    }
}

/// `1{prob >= threshold}` as a 0/1 tensor of the same shape.
pub fn predict_binary<T: Scalar>(prob: &Tensor<T>, threshold: f64) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let th = T::lit(threshold);
    let data = prob
        .data()
        .iter()
        .map(|&p| if p >= th { T::one() } else { T::zero() })
        .collect();
    Tensor::from_vec(prob.shape(), data)
}
