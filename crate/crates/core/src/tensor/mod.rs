//! Dense tensors with optional reverse-mode gradient tracking.
//!
//! A [`Tensor`] is a cheap, clonable handle to an immutable element buffer.
//! Tensors produced by an operation whose inputs track gradients record the
//! producing [`Op`] so that [`backward`] can walk the graph.

mod autograd;
pub mod gradcheck;
pub(crate) mod kernels;
pub mod ops;

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use autograd::{backward, BackwardFn, Op, OpKind};
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{
    activation, add, bce_loss, channel_reduce, concat_channels, conv2d, conv2d_transpose,
    custom_op, maxpool2d, mean, mul, mul_channel_broadcast, scale, sum, Activation, Padding,
    Reduction, BCE_EPS,
};

/// Ordered list of dimensions. Image tensors use (batch, channels, height, width).
#[derive(Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("rank-0 shapes are not supported; use [1] for scalars"));
        }
        if dims.contains(&0) {
            return Err(Error::shape(format!("zero-sized dimension in {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Splits a rank-4 shape into (n, c, h, w).
    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.0.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            other => Err(Error::shape(format!("expected a rank-4 NCHW shape, got {other:?}"))),
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Anything that can be validated into a [`Shape`].
pub trait IntoShape {
    fn into_shape(self) -> Result<Shape>;
}

impl IntoShape for Shape {
    fn into_shape(self) -> Result<Shape> {
        Ok(self)
    }
}

impl IntoShape for &Shape {
    fn into_shape(self) -> Result<Shape> {
        Ok(self.clone())
    }
}

impl IntoShape for &[usize] {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self.to_vec())
    }
}

impl<const N: usize> IntoShape for [usize; N] {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self.to_vec())
    }
}

impl<const N: usize> IntoShape for &[usize; N] {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self.to_vec())
    }
}

impl IntoShape for Vec<usize> {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self)
    }
}

pub(crate) struct Inner<T: Scalar> {
    shape: Shape,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    op: Option<Op<T>>,
}

/// Dense N-d array handle. Cloning shares the buffer.
pub struct Tensor<T: Scalar> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.inner.shape);
        s.field("requires_grad", &self.inner.requires_grad);
        if let Some(op) = &self.inner.op {
            s.field("op", &op.kind());
        }
        if self.numel() <= 16 {
            s.field("data", &self.inner.data);
        }
        s.finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec<S>(shape: S, data: Vec<T>) -> Result<Self>
    where
        S: IntoShape,
    {
        let shape = shape.into_shape()?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self::build(shape, data, false, None))
    }

    pub fn full<S>(shape: S, value: T) -> Result<Self>
    where
        S: IntoShape,
    {
        let shape = shape.into_shape()?;
        let data = vec![value; shape.numel()];
        Ok(Self::build(shape, data, false, None))
    }

    pub fn zeros<S>(shape: S) -> Result<Self>
    where
        S: IntoShape,
    {
        Self::full(shape, T::zero())
    }

    pub fn ones<S>(shape: S) -> Result<Self>
    where
        S: IntoShape,
    {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Shape(vec![1]), vec![value], false, None)
    }

    pub(crate) fn build(shape: Shape, data: Vec<T>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                op,
            }),
        }
    }

    /// Output of an operation: records `op` only when some input tracks gradients.
    pub(crate) fn from_op(shape: Shape, data: Vec<T>, op: Op<T>) -> Self {
        let op = op.inputs().iter().any(|t| t.tracks()).then_some(op);
        Self::build(shape, data, false, op)
    }

    /// Returns a leaf with the same data that accumulates gradients.
    pub fn requires_grad(self) -> Self {
        self.with_requires_grad(true)
    }

    pub fn with_requires_grad(&self, flag: bool) -> Self {
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), flag, None)
    }

    /// A leaf copy without graph history.
    pub fn detach(&self) -> Self {
        self.with_requires_grad(false)
    }

    pub fn shape(&self) -> &Shape {
        &self.inner.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.inner.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.op.is_none()
    }

    pub fn is_requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// True when gradients flow through this tensor.
    pub fn tracks(&self) -> bool {
        self.inner.requires_grad || self.inner.op.is_some()
    }

    pub fn op(&self) -> Option<&Op<T>> {
        self.inner.op.as_ref()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        match self.inner.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::shape(format!("item() on tensor of shape {:?}", self.shape()))),
        }
    }

    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        self.inner.shape.nchw()
    }

    /// Accumulated gradient, if backward has reached this leaf.
    pub fn grad(&self) -> Option<Tensor<T>> {
        let guard = self.inner.grad.lock().expect("grad lock");
        guard
            .as_ref()
            .map(|g| Self::build(self.inner.shape.clone(), g.clone(), false, None))
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.lock().expect("grad lock").is_some()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn set_grad(&self, g: Vec<T>) {
        debug_assert_eq!(g.len(), self.numel());
        *self.inner.grad.lock().expect("grad lock") = Some(g);
    }

    pub(crate) fn node_id(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// Fails with [`Error::NonFinite`] if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.inner.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Copies channels `[start, end)` of a rank-4 tensor. Not differentiable.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        let (n, c, h, w) = self.nchw()?;
        if start >= end || end > c {
            return Err(Error::shape(format!("channel range {start}..{end} out of 0..{c}")));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (end - start) * plane);
        for i in 0..n {
            let base = i * c * plane;
            data.extend_from_slice(&self.inner.data[base + start * plane..base + end * plane]);
        }
        Tensor::from_vec(vec![n, end - start, h, w], data)
    }

    /// Copies sample `index` of the batch dimension into a batch of one.
    pub fn sample(&self, index: usize) -> Result<Self> {
        let dims = self.dims();
        if index >= dims[0] {
            return Err(Error::shape(format!("sample {index} out of batch {}", dims[0])));
        }
        let per = self.numel() / dims[0];
        let mut new_dims = dims.to_vec();
        new_dims[0] = 1;
        Tensor::from_vec(new_dims, self.inner.data[index * per..(index + 1) * per].to_vec())
    }

    /// Stacks equally-shaped tensors along the leading dimension. Not differentiable.
    pub fn stack_batch(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::shape("stack of zero tensors"))?;
        let inner_dims = &first.dims()[1..];
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        let mut batch = 0;
        for p in parts {
            if &p.dims()[1..] != inner_dims {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
            batch += p.dims()[0];
            data.extend_from_slice(p.data());
        }
        let mut dims = vec![batch];
        dims.extend_from_slice(inner_dims);
        Tensor::from_vec(dims, data)
    }

    /// Same data under a new shape with equal element count. Not differentiable.
    pub fn reshape<S>(&self, shape: S) -> Result<Self>
    where
        S: IntoShape,
    {
        Tensor::from_vec(shape, self.to_vec())
    }

    /// Converts element precision. Produces an untracked leaf.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data = self
            .inner
            .data
            .iter()
            .map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
            .collect();
        Tensor::build(self.inner.shape.clone(), data, false, None)
    }
}
