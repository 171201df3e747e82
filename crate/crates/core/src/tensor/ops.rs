//! Differentiable primitives.

use super::autograd::{BackwardFn, Op};
use super::kernels::{self, ConvGeom};
use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clamp applied to predictions before taking logarithms in [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// Output size `ceil(in / stride)`; the total padding is split with the
    /// smaller half on top/left.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

fn shape4(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape(vec![n, c, h, w])
}

/// Resolves output size and leading pad for one spatial axis.
fn axis_geometry(size: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = size.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(size);
            if size + total < k {
                return Err(Error::shape(format!("kernel {k} larger than padded input {}", size + total)));
            }
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if k > size {
                return Err(Error::shape(format!("kernel {k} larger than input {size}")));
            }
            Ok(((size - k) / stride + 1, 0))
        }
    }
}

fn conv_geometry(
    input: (usize, usize, usize, usize),
    weight: (usize, usize, usize, usize),
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    let (n, cin, h, w) = input;
    let (cout, wcin, kh, kw) = weight;
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if cin != wcin {
        return Err(Error::shape(format!(
            "input has {cin} channels but weight expects {wcin}"
        )));
    }
    let (oh, pad_top) = axis_geometry(h, kh, stride, padding)?;
    let (ow, pad_left) = axis_geometry(w, kw, stride, padding)?;
    Ok(ConvGeom {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        stride,
        pad_top,
        pad_left,
        oh,
        ow,
    })
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.dims() != [channels] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {channels} output channels",
                b.shape()
            )));
        }
    }
    Ok(())
}

/// 2-d cross-correlation of an NCHW input with a `[cout, cin, kh, kw]` kernel.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let geom = conv_geometry(input.nchw()?, weight.nchw()?, stride, padding)?;
    check_bias(bias, geom.cout)?;
    let data = kernels::conv_forward(&geom, input.data(), weight.data(), bias.map(|b| b.data()));
    Ok(Tensor::from_op(
        shape4(geom.n, geom.cout, geom.oh, geom.ow),
        data,
        Op::Conv2d {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.cloned(),
            geom,
        },
    ))
}

/// Transposed convolution with a `[cin, cout, kh, kw]` kernel, defined as the
/// adjoint of a same-padded `conv2d` with the given stride. Spatial dims are
/// multiplied by `stride`.
pub fn conv2d_transpose<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.nchw()?;
    let (wcin, cout, kh, kw) = weight.nchw()?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "input has {cin} channels but transposed weight expects {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    // The forward convolution maps [n, cout, h*s, w*s] -> [n, cin, h, w].
    let geom = conv_geometry((n, cout, h * stride, w * stride), (cin, cout, kh, kw), stride, Padding::Same)?;
    debug_assert_eq!((geom.oh, geom.ow), (h, w));
    check_bias(bias, cout)?;
    let mut data = kernels::conv_backward_input(&geom, weight.data(), input.data());
    if let Some(b) = bias {
        let plane = geom.h * geom.w;
        for (idx, chunk) in data.chunks_mut(plane).enumerate() {
            let bv = b.data()[idx % cout];
            for v in chunk {
                *v += bv;
            }
        }
    }
    Ok(Tensor::from_op(
        shape4(n, cout, geom.h, geom.w),
        data,
        Op::ConvTranspose2d {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.cloned(),
            geom,
        },
    ))
}

/// 2x2 max pooling with stride 2. Ties resolve to the first element in row-major order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("max pooling needs even spatial dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut data = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                data.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Tensor::from_op(
        shape4(n, c, oh, ow),
        data,
        Op::MaxPool2d {
            input: input.clone(),
            argmax,
        },
    ))
}

/// Per-pixel max or mean over the channel axis, producing one channel.
pub fn channel_reduce<T: Scalar>(input: &Tensor<T>, kind: Reduction) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw()?;
    let plane = h * w;
    let x = input.data();
    let mut data = Vec::with_capacity(n * plane);
    let mut argmax = Vec::new();
    match kind {
        Reduction::Max => {
            argmax.reserve(n * plane);
            for i in 0..n {
                for k in 0..plane {
                    let mut best = i * c * plane + k;
                    for ch in 1..c {
                        let idx = (i * c + ch) * plane + k;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    data.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        Reduction::Mean => {
            let inv = T::one() / T::from_usize(c).expect("channel count");
            for i in 0..n {
                for k in 0..plane {
                    let mut s = T::zero();
                    for ch in 0..c {
                        s += x[(i * c + ch) * plane + k];
                    }
                    data.push(s * inv);
                }
            }
        }
    }
    Ok(Tensor::from_op(
        shape4(n, 1, h, w),
        data,
        Op::ChannelReduce {
            input: input.clone(),
            kind,
            argmax,
        },
    ))
}

/// Concatenates `a` and `b` along channels; `a` comes first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, h, w) = a.nchw()?;
    let (nb, cb, hb, wb) = b.nchw()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(format!(
            "cannot concatenate {:?} and {:?} along channels",
            a.shape(),
            b.shape()
        )));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
    }
    Ok(Tensor::from_op(
        shape4(n, ca + cb, h, w),
        data,
        Op::ConcatChannels {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    let shape = input.shape().clone();
    Ok(match kind {
        Activation::Relu => {
            let data = input.data().iter().map(|&x| x.max(T::zero())).collect();
            Tensor::from_op(shape, data, Op::Relu { input: input.clone() })
        }
        Activation::Sigmoid => {
            let data: Vec<T> = input.data().iter().map(|&x| sigmoid(x)).collect();
            Tensor::from_op(
                shape,
                data.clone(),
                Op::Sigmoid {
                    input: input.clone(),
                    output: data,
                },
            )
        }
    })
}

/// Mean binary cross-entropy; predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            pred.shape(),
            target.shape()
        )));
    }
    if target.data().iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::invalid("bce target values must be 0 or 1"));
    }
    let eps = T::lit(BCE_EPS);
    let hi = T::one() - eps;
    let mut total = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        // max/min would swallow a NaN; let it reach the loss instead
        let p = if p.is_nan() { p } else { p.max(eps).min(hi) };
        total -= if t == T::one() { p.ln() } else { (T::one() - p).ln() };
    }
    let loss = total / T::from_usize(pred.numel()).expect("count");
    Ok(Tensor::from_op(
        Shape(vec![1]),
        vec![loss],
        Op::Bce {
            pred: pred.clone(),
            target: target.to_vec(),
            eps,
        },
    ))
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape().clone(),
        data,
        Op::Add {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

/// Elementwise product.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_op(
        a.shape().clone(),
        data,
        Op::Mul {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

pub fn scale<T: Scalar>(input: &Tensor<T>, factor: T) -> Tensor<T> {
    let data = input.data().iter().map(|&x| x * factor).collect();
    Tensor::from_op(
        input.shape().clone(),
        data,
        Op::Scale {
            input: input.clone(),
            factor,
        },
    )
}

pub fn sum<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.data().iter().copied().sum::<T>();
    Tensor::from_op(Shape(vec![1]), vec![s], Op::Sum { input: input.clone() })
}

pub fn mean<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.data().iter().copied().sum::<T>() / T::from_usize(input.numel()).expect("count");
    Tensor::from_op(Shape(vec![1]), vec![s], Op::Mean { input: input.clone() })
}

/// `input[n,c,h,w] * map[n,0,h,w]`, the map broadcast over channels.
pub fn mul_channel_broadcast<T: Scalar>(input: &Tensor<T>, map: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw()?;
    if map.dims() != [n, 1, h, w] {
        return Err(Error::shape(format!(
            "map {:?} cannot broadcast over {:?}",
            map.shape(),
            input.shape()
        )));
    }
    let plane = h * w;
    let (x, m) = (input.data(), map.data());
    let mut data = Vec::with_capacity(x.len());
    for i in 0..n {
        let mp = &m[i * plane..(i + 1) * plane];
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            data.extend(x[base..base + plane].iter().zip(mp).map(|(&a, &b)| a * b));
        }
    }
    Ok(Tensor::from_op(
        input.shape().clone(),
        data,
        Op::ChannelBroadcastMul {
            input: input.clone(),
            map: map.clone(),
        },
    ))
}

/// Multiplies by a constant (non-differentiable) mask of the same shape.
pub fn mask_mul<T: Scalar>(input: &Tensor<T>, mask: Vec<T>) -> Result<Tensor<T>> {
    if mask.len() != input.numel() {
        return Err(Error::shape("mask length does not match input"));
    }
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(Tensor::from_op(
        input.shape().clone(),
        data,
        Op::MaskMul {
            input: input.clone(),
            mask,
        },
    ))
}

/// Batch-statistics normalization followed by a per-channel affine map.
/// Returns the output and the biased per-channel batch mean and variance.
pub fn batch_norm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (n, c, h, w) = input.nchw()?;
    check_affine(gamma, beta, c)?;
    let plane = h * w;
    let count = T::from_usize(n * plane).expect("count");
    let x = input.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for i in 0..n {
            let base = (i * c + ch) * plane;
            s += x[base..base + plane].iter().copied().sum::<T>();
        }
        let m = s / count;
        let mut v = T::zero();
        for i in 0..n {
            let base = (i * c + ch) * plane;
            for &xv in &x[base..base + plane] {
                v += (xv - m) * (xv - m);
            }
        }
        mean[ch] = m;
        var[ch] = v / count;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut normalized = vec![T::zero(); x.len()];
    let mut data = vec![T::zero(); x.len()];
    let (g, b) = (gamma.data(), beta.data());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            for k in base..base + plane {
                let xh = (x[k] - mean[ch]) * inv_std[ch];
                normalized[k] = xh;
                data[k] = g[ch] * xh + b[ch];
            }
        }
    }
    let out = Tensor::from_op(
        input.shape().clone(),
        data,
        Op::BatchNormTrain {
            input: input.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            normalized,
            inv_std,
        },
    );
    Ok((out, mean, var))
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta` with fixed statistics.
pub fn channel_affine<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw()?;
    check_affine(gamma, beta, c)?;
    if mean.len() != c || var.len() != c {
        return Err(Error::shape("statistics length does not match channels"));
    }
    let plane = h * w;
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (x, g, b) = (input.data(), gamma.data(), beta.data());
    let mut data = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            for k in base..base + plane {
                data[k] = g[ch] * (x[k] - mean[ch]) * inv_std[ch] + b[ch];
            }
        }
    }
    Ok(Tensor::from_op(
        input.shape().clone(),
        data,
        Op::ChannelAffine {
            input: input.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            mean: mean.to_vec(),
            inv_std,
        },
    ))
}

fn check_affine<T: Scalar>(gamma: &Tensor<T>, beta: &Tensor<T>, c: usize) -> Result<()> {
    if gamma.dims() != [c] || beta.dims() != [c] {
        return Err(Error::shape(format!(
            "scale/shift shapes {:?}/{:?} do not match {c} channels",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// Wraps precomputed output data with a caller-supplied backward rule.
pub fn custom_op<T: Scalar>(
    inputs: Vec<Tensor<T>>,
    shape: Shape,
    data: Vec<T>,
    backward: BackwardFn<T>,
) -> Result<Tensor<T>> {
    if shape.numel() != data.len() {
        return Err(Error::shape("custom op data does not match its shape"));
    }
    Ok(Tensor::from_op(shape, data, Op::Custom { inputs, backward }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::backward;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let x = Tensor::<f64>::ones([1, 1, 3, 3]).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = t(&[1, 1, 3, 3], k);
        let y = conv2d(&x, &w, None, 1, Padding::Same).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn pointwise_conv_is_affine() {
        let x = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 1, 1], vec![2.0]);
        let b = t(&[1], vec![1.0]);
        let y = conv2d(&x, &w, Some(&b), 1, Padding::Same).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn conv_rejects_bad_arguments() {
        let x = Tensor::<f64>::ones([1, 2, 4, 4]).unwrap();
        let w = Tensor::<f64>::ones([1, 3, 3, 3]).unwrap();
        assert!(conv2d(&x, &w, None, 1, Padding::Same).is_err());
        let w = Tensor::<f64>::ones([1, 2, 5, 5]).unwrap();
        assert!(conv2d(&x, &w, None, 1, Padding::Valid).is_err());
        let w = Tensor::<f64>::ones([1, 2, 3, 3]).unwrap();
        assert!(conv2d(&x, &w, None, 0, Padding::Same).is_err());
    }

    #[test]
    fn same_padding_even_kernel_pads_bottom_right() {
        // 2x2 kernel selecting the top-left tap: with pad only on bottom/right
        // the output reproduces the input.
        let x = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]);
        let y = conv2d(&x, &w, None, 1, Padding::Same).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn transpose_single_pixel_expands() {
        let x = t(&[1, 1, 1, 1], vec![5.0]);
        let w = Tensor::<f64>::ones([1, 1, 2, 2]).unwrap();
        let y = conv2d_transpose(&x, &w, None, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0; 4]);
    }

    #[test]
    fn transpose_zero_weight_gives_bias() {
        let x = t(&[1, 2, 3, 3], (0..18).map(f64::from).collect());
        let w = Tensor::<f64>::zeros([2, 3, 3, 3]).unwrap();
        let b = t(&[3], vec![0.5, -1.0, 2.0]);
        let y = conv2d_transpose(&x, &w, Some(&b), 2).unwrap();
        assert_eq!(y.dims(), &[1, 3, 6, 6]);
        for (i, plane) in y.data().chunks(36).enumerate() {
            assert!(plane.iter().all(|&v| v == b.data()[i]));
        }
        let bad = Tensor::<f64>::zeros([3, 3, 3, 3]).unwrap();
        assert!(conv2d_transpose(&x, &bad, None, 2).is_err());
    }

    #[test]
    fn maxpool_basics() {
        let x = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(maxpool2d(&x).unwrap().data(), &[4.0]);
        let odd = Tensor::<f64>::ones([1, 1, 3, 2]).unwrap();
        assert!(maxpool2d(&odd).is_err());
    }

    #[test]
    fn maxpool_tie_routes_to_first_element() {
        let x = Tensor::<f64>::full([1, 1, 4, 4], 2.0).unwrap().requires_grad();
        let y = maxpool2d(&x).unwrap();
        assert_eq!(y.data(), &[2.0; 4]);
        backward(&sum(&y)).unwrap();
        let g = x.grad().unwrap();
        let expected: Vec<f64> = (0..16)
            .map(|i| if (i / 4) % 2 == 0 && (i % 4) % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(g.data(), expected.as_slice());
    }

    #[test]
    fn channel_reduce_values() {
        let x = t(&[1, 2, 1, 1], vec![2.0, 4.0]);
        assert_eq!(channel_reduce(&x, Reduction::Max).unwrap().data(), &[4.0]);
        assert_eq!(channel_reduce(&x, Reduction::Mean).unwrap().data(), &[3.0]);
        let single = t(&[1, 1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]);
        for kind in [Reduction::Max, Reduction::Mean] {
            assert_eq!(channel_reduce(&single, kind).unwrap().data(), single.data());
        }
    }

    #[test]
    fn concat_layout_and_gradient() {
        let a = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).requires_grad();
        let b = t(&[1, 2, 2, 2], (5..13).map(f64::from).collect()).requires_grad();
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.dims(), &[1, 3, 2, 2]);
        assert_eq!(y.slice_channels(0, 1).unwrap().data(), a.data());
        assert_eq!(y.slice_channels(1, 3).unwrap().data(), b.data());
        backward(&sum(&y)).unwrap();
        assert!(a.grad().unwrap().data().iter().all(|&g| g == 1.0));
        assert!(b.grad().unwrap().data().iter().all(|&g| g == 1.0));
        let other = Tensor::<f64>::ones([1, 1, 3, 2]).unwrap();
        assert!(concat_channels(&a, &other).is_err());
    }

    #[test]
    fn empty_channel_tensors_cannot_exist() {
        assert!(Tensor::<f64>::zeros([1, 0, 2, 2]).is_err());
    }

    #[test]
    fn activation_values() {
        let x = t(&[3], vec![0.0, -3.0, 3.0]);
        let s = activation(&x, Activation::Sigmoid).unwrap();
        assert_eq!(s.data()[0], 0.5);
        let r = activation(&x, Activation::Relu).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn bce_values() {
        let half = Tensor::<f64>::full([4], 0.5).unwrap();
        let tgt = t(&[4], vec![1.0, 0.0, 1.0, 1.0]);
        let l = bce_loss(&half, &tgt).unwrap().item().unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let l = bce_loss(&tgt, &tgt).unwrap().item().unwrap();
        assert!(l < 1e-6);

        let p = t(&[2], vec![0.8, 0.4]);
        let y = t(&[2], vec![1.0, 0.0]);
        let l = bce_loss(&p, &y).unwrap().item().unwrap();
        let direct = -(0.8f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((l - direct).abs() < 1e-12, "{l}");
        assert!((l - 0.366_985).abs() < 1e-6, "{l}");

        assert!(bce_loss(&p, &t(&[2], vec![1.0, 0.5])).is_err());
        assert!(bce_loss(&p, &t(&[1], vec![1.0])).is_err());
    }

    #[test]
    fn backward_accumulates_and_guards() {
        let x = t(&[3], vec![1.0, 2.0, 3.0]).requires_grad();
        backward(&sum(&x)).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0; 3]);
        assert!(matches!(backward(&sum(&x)), Err(Error::GradNotReset)));
        x.zero_grad();
        let y = add(&x, &x).unwrap();
        backward(&sum(&y)).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0; 3]);
        assert!(matches!(backward(&y), Err(Error::NonScalarBackward(_))));
    }
}
