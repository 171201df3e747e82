//! DropBlock: zeroes contiguous square regions of each feature map and
//! rescales the survivors.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ops::mask_mul, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DropBlockConfig {
    /// Side of the square dropped region; odd and positive.
    pub block_size: usize,
    /// Target fraction of dropped activations, in `[0, 1)`.
    pub drop_rate: f64,
}

impl DropBlockConfig {
    pub const DRIVE: DropBlockConfig = DropBlockConfig {
        block_size: 7,
        drop_rate: 0.18,
    };
    pub const CHASE: DropBlockConfig = DropBlockConfig {
        block_size: 7,
        drop_rate: 0.13,
    };

    pub fn new(block_size: usize, drop_rate: f64) -> Result<Self> {
        let cfg = DropBlockConfig {
            block_size,
            drop_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.block_size % 2 == 0 {
            return Err(Error::Config(format!(
                "block size must be odd and positive, got {}",
                self.block_size
            )));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::Config(format!(
                "drop rate must lie in [0, 1), got {}",
                self.drop_rate
            )));
        }
        Ok(())
    }

    /// Same block size, no dropping.
    pub fn disabled(&self) -> Self {
        DropBlockConfig {
            drop_rate: 0.0,
            ..*self
        }
    }
}

impl Default for DropBlockConfig {
    fn default() -> Self {
        Self::DRIVE
    }
}

/// Bernoulli rate of block seeds that yields `drop_rate` dropped units on
/// an `feat_h x feat_w` map, ignoring block overlap.
pub fn dropblock_gamma(drop_rate: f64, block_size: usize, feat_h: usize, feat_w: usize) -> Result<f64> {
    if block_size == 0 || block_size > feat_h.min(feat_w) {
        return Err(Error::BlockTooLarge {
            block: block_size,
            height: feat_h,
            width: feat_w,
        });
    }
    let bs = block_size as f64;
    let valid = ((feat_h - block_size + 1) * (feat_w - block_size + 1)) as f64;
    Ok(drop_rate / (bs * bs) * (feat_h * feat_w) as f64 / valid)
}

/// One keep-mask (`true` = kept) for a single `h x w` plane. Seeds are drawn
/// in row-major order over the top-left offsets where a block fits entirely.
pub fn sample_block_mask<R: Rng + ?Sized>(h: usize, w: usize, cfg: &DropBlockConfig, rng: &mut R) -> Result<Vec<bool>> {
    let gamma = dropblock_gamma(cfg.drop_rate, cfg.block_size, h, w)?;
    let bs = cfg.block_size;
    let mut keep = vec![true; h * w];
    for top in 0..=h - bs {
        for left in 0..=w - bs {
            if rng.random::<f64>() < gamma {
                for r in top..top + bs {
                    keep[r * w + left..r * w + left + bs].fill(false);
                }
            }
        }
    }
    Ok(keep)
}

/// Applies DropBlock independently to every (sample, channel) plane.
///
/// Outside training, or with a zero drop rate, the input is returned as is.
/// A plane whose mask keeps nothing is resampled once and otherwise passed
/// through unmasked.
pub fn dropblock_forward<T: Scalar>(
    input: &Tensor<T>,
    cfg: &DropBlockConfig,
    rng: Option<&mut dyn RngCore>,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    let Some(rng) = rng else {
        return Ok(input.clone());
    };
    if cfg.drop_rate == 0.0 {
        return Ok(input.clone());
    }
    let (n, c, h, w) = input.nchw()?;
    let plane = h * w;
    let mut mask = Vec::with_capacity(input.numel());
    for _ in 0..n * c {
        let mut keep = sample_block_mask(h, w, cfg, rng)?;
        let mut kept = keep.iter().filter(|&&k| k).count();
        if kept == 0 {
            keep = sample_block_mask(h, w, cfg, rng)?;
            kept = keep.iter().filter(|&&k| k).count();
        }
        if kept == 0 {
            mask.extend(std::iter::repeat_n(T::one(), plane));
            continue;
        }
        let scale = T::from_usize(plane).expect("count") / T::from_usize(kept).expect("count");
        mask.extend(keep.iter().map(|&k| if k { scale } else { T::zero() }));
    }
    mask_mul(input, mask)
}
