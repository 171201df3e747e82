use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use super::kernels::{self, ConvGeom};
use super::ops::Reduction;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Backward rule of a user-supplied operation: maps the output gradient to
/// one gradient buffer per input.
pub type BackwardFn<T> = Arc<dyn Fn(&[T]) -> Vec<Vec<T>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv2d,
    ConvTranspose2d,
    MaxPool2d,
    ChannelReduce,
    ConcatChannels,
    Relu,
    Sigmoid,
    Bce,
    Add,
    Mul,
    Scale,
    Sum,
    Mean,
    ChannelBroadcastMul,
    MaskMul,
    BatchNormTrain,
    ChannelAffine,
    Custom,
}

/// Producing primitive of a tracked tensor, with whatever forward-time
/// context its backward rule needs.
pub enum Op<T: Scalar> {
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
        geom: ConvGeom,
    },
    /// `geom` describes the stride-2 convolution this operation is the adjoint of.
    ConvTranspose2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
        geom: ConvGeom,
    },
    MaxPool2d {
        input: Tensor<T>,
        argmax: Vec<usize>,
    },
    ChannelReduce {
        input: Tensor<T>,
        kind: Reduction,
        argmax: Vec<usize>,
    },
    ConcatChannels {
        a: Tensor<T>,
        b: Tensor<T>,
    },
    Relu {
        input: Tensor<T>,
    },
    Sigmoid {
        input: Tensor<T>,
        output: Vec<T>,
    },
    Bce {
        pred: Tensor<T>,
        target: Vec<T>,
        eps: T,
    },
    Add {
        a: Tensor<T>,
        b: Tensor<T>,
    },
    Mul {
        a: Tensor<T>,
        b: Tensor<T>,
    },
    Scale {
        input: Tensor<T>,
        factor: T,
    },
    Sum {
        input: Tensor<T>,
    },
    Mean {
        input: Tensor<T>,
    },
    ChannelBroadcastMul {
        input: Tensor<T>,
        map: Tensor<T>,
    },
    MaskMul {
        input: Tensor<T>,
        mask: Vec<T>,
    },
    BatchNormTrain {
        input: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    ChannelAffine {
        input: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    Custom {
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    },
}

impl<T: Scalar> fmt::Debug for Op<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind())
    }
}

impl<T: Scalar> Op<T> {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::MaxPool2d { .. } => OpKind::MaxPool2d,
            Op::ChannelReduce { .. } => OpKind::ChannelReduce,
            Op::ConcatChannels { .. } => OpKind::ConcatChannels,
            Op::Relu { .. } => OpKind::Relu,
            Op::Sigmoid { .. } => OpKind::Sigmoid,
            Op::Bce { .. } => OpKind::Bce,
            Op::Add { .. } => OpKind::Add,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
            Op::ChannelBroadcastMul { .. } => OpKind::ChannelBroadcastMul,
            Op::MaskMul { .. } => OpKind::MaskMul,
            Op::BatchNormTrain { .. } => OpKind::BatchNormTrain,
            Op::ChannelAffine { .. } => OpKind::ChannelAffine,
            Op::Custom { .. } => OpKind::Custom,
        }
    }

    pub fn inputs(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::Conv2d {
                input, weight, bias, ..
            }
            | Op::ConvTranspose2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![input, weight];
                v.extend(bias.iter());
                v
            }
            Op::MaxPool2d { input, .. }
            | Op::ChannelReduce { input, .. }
            | Op::Relu { input }
            | Op::Sigmoid { input, .. }
            | Op::Scale { input, .. }
            | Op::Sum { input }
            | Op::Mean { input }
            | Op::MaskMul { input, .. } => vec![input],
            Op::Bce { pred, .. } => vec![pred],
            Op::ConcatChannels { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![a, b],
            Op::ChannelBroadcastMul { input, map } => vec![input, map],
            Op::BatchNormTrain {
                input, gamma, beta, ..
            }
            | Op::ChannelAffine {
                input, gamma, beta, ..
            } => vec![input, gamma, beta],
            Op::Custom { inputs, .. } => inputs.iter().collect(),
        }
    }

    /// Gradients for each input, in [`Op::inputs`] order.
    fn backward(&self, grad: &[T]) -> Vec<Vec<T>> {
        match self {
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let mut out = Vec::with_capacity(3);
                out.push(if input.tracks() {
                    kernels::conv_backward_input(geom, weight.data(), grad)
                } else {
                    Vec::new()
                });
                out.push(if weight.tracks() {
                    kernels::conv_backward_weight(geom, input.data(), grad)
                } else {
                    Vec::new()
                });
                if bias.is_some() {
                    out.push(kernels::bias_grad(geom.n, geom.cout, geom.oh * geom.ow, grad));
                }
                out
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
            } => {
                // Forward was conv_backward_input(geom, w, input); its adjoints follow.
                let mut out = Vec::with_capacity(3);
                out.push(if input.tracks() {
                    kernels::conv_forward(geom, grad, weight.data(), None)
                } else {
                    Vec::new()
                });
                out.push(if weight.tracks() {
                    kernels::conv_backward_weight(geom, grad, input.data())
                } else {
                    Vec::new()
                });
                if bias.is_some() {
                    out.push(kernels::bias_grad(geom.n, geom.cin, geom.h * geom.w, grad));
                }
                out
            }
            Op::MaxPool2d { input, argmax } | Op::ChannelReduce {
                input,
                kind: Reduction::Max,
                argmax,
            } => {
                let mut g = vec![T::zero(); input.numel()];
                for (&src, &go) in argmax.iter().zip(grad) {
                    g[src] += go;
                }
                vec![g]
            }
            Op::ChannelReduce {
                input,
                kind: Reduction::Mean,
                ..
            } => {
                let (n, c, h, w) = input.nchw().expect("rank 4");
                let plane = h * w;
                let inv = T::one() / T::from_usize(c).expect("channel count");
                let mut g = vec![T::zero(); input.numel()];
                for i in 0..n {
                    let go = &grad[i * plane..(i + 1) * plane];
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        for (d, &s) in g[base..base + plane].iter_mut().zip(go) {
                            *d = s * inv;
                        }
                    }
                }
                vec![g]
            }
            Op::ConcatChannels { a, b } => {
                let (n, ca, h, w) = a.nchw().expect("rank 4");
                let cb = b.dims()[1];
                let plane = h * w;
                let mut ga = Vec::with_capacity(a.numel());
                let mut gb = Vec::with_capacity(b.numel());
                for i in 0..n {
                    let base = i * (ca + cb) * plane;
                    ga.extend_from_slice(&grad[base..base + ca * plane]);
                    gb.extend_from_slice(&grad[base + ca * plane..base + (ca + cb) * plane]);
                }
                vec![ga, gb]
            }
            Op::Relu { input } => vec![input
                .data()
                .iter()
                .zip(grad)
                .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                .collect()],
            Op::Sigmoid { output, .. } => vec![output
                .iter()
                .zip(grad)
                .map(|(&y, &g)| g * y * (T::one() - y))
                .collect()],
            Op::Bce { pred, target, eps } => {
                let g0 = grad[0];
                let inv_n = T::one() / T::from_usize(pred.numel()).expect("count");
                let hi = T::one() - *eps;
                vec![pred
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        if p < *eps || p > hi {
                            T::zero()
                        } else {
                            g0 * inv_n * (p - t) / (p * (T::one() - p))
                        }
                    })
                    .collect()]
            }
            Op::Add { .. } => vec![grad.to_vec(), grad.to_vec()],
            Op::Mul { a, b } => vec![
                grad.iter().zip(b.data()).map(|(&g, &y)| g * y).collect(),
                grad.iter().zip(a.data()).map(|(&g, &x)| g * x).collect(),
            ],
            Op::Scale { factor, .. } => vec![grad.iter().map(|&g| g * *factor).collect()],
            Op::Sum { input } => vec![vec![grad[0]; input.numel()]],
            Op::Mean { input } => {
                let n = T::from_usize(input.numel()).expect("count");
                vec![vec![grad[0] / n; input.numel()]]
            }
            Op::ChannelBroadcastMul { input, map } => {
                let (n, c, h, w) = input.nchw().expect("rank 4");
                let plane = h * w;
                let x = input.data();
                let m = map.data();
                let mut gx = vec![T::zero(); x.len()];
                let mut gm = vec![T::zero(); m.len()];
                for i in 0..n {
                    let mp = &m[i * plane..(i + 1) * plane];
                    let gmp = &mut gm[i * plane..(i + 1) * plane];
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        for k in 0..plane {
                            let g = grad[base + k];
                            gx[base + k] = g * mp[k];
                            gmp[k] += g * x[base + k];
                        }
                    }
                }
                vec![gx, gm]
            }
            Op::MaskMul { mask, .. } => {
                vec![grad.iter().zip(mask).map(|(&g, &m)| g * m).collect()]
            }
            Op::BatchNormTrain {
                input,
                gamma,
                normalized,
                inv_std,
                ..
            } => {
                let (n, c, h, w) = input.nchw().expect("rank 4");
                let plane = h * w;
                let count = T::from_usize(n * plane).expect("count");
                let gam = gamma.data();
                let mut gx = vec![T::zero(); input.numel()];
                let mut ggamma = vec![T::zero(); c];
                let mut gbeta = vec![T::zero(); c];
                for ch in 0..c {
                    let mut sum_g = T::zero();
                    let mut sum_gx = T::zero();
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        for k in base..base + plane {
                            sum_g += grad[k];
                            sum_gx += grad[k] * normalized[k];
                        }
                    }
                    ggamma[ch] = sum_gx;
                    gbeta[ch] = sum_g;
                    let scale = gam[ch] * inv_std[ch] / count;
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        for k in base..base + plane {
                            gx[k] = scale * (count * grad[k] - sum_g - normalized[k] * sum_gx);
                        }
                    }
                }
                vec![gx, ggamma, gbeta]
            }
            Op::ChannelAffine {
                input,
                gamma,
                mean,
                inv_std,
                ..
            } => {
                let (n, c, h, w) = input.nchw().expect("rank 4");
                let plane = h * w;
                let x = input.data();
                let gam = gamma.data();
                let mut gx = vec![T::zero(); x.len()];
                let mut ggamma = vec![T::zero(); c];
                let mut gbeta = vec![T::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        let s = gam[ch] * inv_std[ch];
                        for k in base..base + plane {
                            gx[k] = grad[k] * s;
                            ggamma[ch] += grad[k] * (x[k] - mean[ch]) * inv_std[ch];
                            gbeta[ch] += grad[k];
                        }
                    }
                }
                vec![gx, ggamma, gbeta]
            }
            Op::Custom { backward, .. } => backward(grad),
        }
    }
}

/// Reverse-mode gradient propagation from a scalar `loss`.
///
/// Every leaf reachable from `loss` that was created with `requires_grad`
/// receives its gradient; contributions from multiple uses are summed.
/// Leaves must not already hold a gradient.
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(Error::NonScalarBackward(loss.dims().to_vec()));
    }
    if !loss.tracks() {
        return Ok(());
    }
    let order = topo_order(loss);
    for t in &order {
        if t.is_leaf() && t.is_requires_grad() && t.has_grad() {
            return Err(Error::GradNotReset);
        }
    }

    let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
    grads.insert(loss.node_id(), vec![T::one()]);
    for t in &order {
        let Some(g) = grads.remove(&t.node_id()) else {
            continue;
        };
        match t.op() {
            None => {
                if t.is_requires_grad() {
                    t.set_grad(g);
                }
            }
            Some(op) => {
                let inputs = op.inputs();
                let input_grads = op.backward(&g);
                debug_assert_eq!(inputs.len(), input_grads.len());
                for (input, ig) in inputs.into_iter().zip(input_grads) {
                    if !input.tracks() {
                        continue;
                    }
                    debug_assert_eq!(ig.len(), input.numel(), "{:?}", op.kind());
                    match grads.entry(input.node_id()) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (acc, v) in e.get_mut().iter_mut().zip(&ig) {
                                *acc += *v;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(ig);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Tracked tensors reachable from `root`, each once, consumers before producers.
fn topo_order<T: Scalar>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut visited: HashSet<usize> = HashSet::new();
    let mut post: Vec<Tensor<T>> = Vec::new();
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            post.push(t);
            continue;
        }
        if !visited.insert(t.node_id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(op) = t.op() {
            for input in op.inputs().into_iter().rev() {
                if input.tracks() && !visited.contains(&input.node_id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    post.reverse();
    post
}
