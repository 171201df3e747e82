use super::FundusSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Zero padding added around an image; enough to undo it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PadOffsets {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl PadOffsets {
    /// Centred padding from `(h, w)` to `target`, remainder on bottom/right.
    pub fn centered(h: usize, w: usize, target: (usize, usize)) -> Result<Self> {
        let (th, tw) = target;
        if th < h || tw < w {
            return Err(Error::invalid(format!(
                "pad target {th}x{tw} is smaller than image {h}x{w}"
            )));
        }
        let (dh, dw) = (th - h, tw - w);
        Ok(PadOffsets {
            top: dh / 2,
            bottom: dh - dh / 2,
            left: dw / 2,
            right: dw - dw / 2,
        })
    }

    pub fn is_zero(&self) -> bool {
        *self == PadOffsets::default()
    }
}

impl Default for PadOffsets {
    fn default() -> Self {
        PadOffsets {
            top: 0,
            bottom: 0,
            left: 0,
            right: 0,
        }
    }
}

/// Pads the last two dimensions of `t` with zeros.
pub fn pad_tensor<T: Scalar>(t: &Tensor<T>, off: &PadOffsets) -> Result<Tensor<T>> {
    let dims = t.dims();
    if dims.len() < 2 {
        return Err(Error::shape("padding needs at least two dimensions"));
    }
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let (nh, nw) = (h + off.top + off.bottom, w + off.left + off.right);
    let planes = t.numel() / (h * w);
    let mut data = vec![T::zero(); planes * nh * nw];
    for p in 0..planes {
        for r in 0..h {
            let src = &t.data()[p * h * w + r * w..p * h * w + (r + 1) * w];
            let start = p * nh * nw + (r + off.top) * nw + off.left;
            data[start..start + w].copy_from_slice(src);
        }
    }
    let mut new_dims = dims.to_vec();
    let rank = new_dims.len();
    new_dims[rank - 2] = nh;
    new_dims[rank - 1] = nw;
    Tensor::from_vec(new_dims, data)
}

/// Zero-pads image, mask and fov to `target`, centred.
pub fn pad_to_target<T: Scalar>(sample: &FundusSample<T>, target: (usize, usize)) -> Result<(FundusSample<T>, PadOffsets)> {
    let off = PadOffsets::centered(sample.height(), sample.width(), target)?;
    let padded = FundusSample {
        id: sample.id.clone(),
        image: pad_tensor(&sample.image, &off)?,
        mask: pad_tensor(&sample.mask, &off)?,
        fov: sample.fov.as_ref().map(|f| pad_tensor(f, &off)).transpose()?,
        lineage: sample.lineage.clone(),
    };
    Ok((padded, off))
}

/// Removes the padding described by `off` from the last two dimensions.
pub fn crop_back<T: Scalar>(t: &Tensor<T>, off: &PadOffsets) -> Result<Tensor<T>> {
    let dims = t.dims();
    if dims.len() < 2 {
        return Err(Error::shape("cropping needs at least two dimensions"));
    }
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    if off.top + off.bottom >= h || off.left + off.right >= w {
        return Err(Error::invalid(format!("offsets {off:?} leave nothing of a {h}x{w} map")));
    }
    let (nh, nw) = (h - off.top - off.bottom, w - off.left - off.right);
    let planes = t.numel() / (h * w);
    let mut data = Vec::with_capacity(planes * nh * nw);
    for p in 0..planes {
        for r in off.top..off.top + nh {
            let start = p * h * w + r * w + off.left;
            data.extend_from_slice(&t.data()[start..start + nw]);
        }
    }
    let mut new_dims = dims.to_vec();
    let rank = new_dims.len();
    new_dims[rank - 2] = nh;
    new_dims[rank - 1] = nw;
    Tensor::from_vec(new_dims, data)
}
