use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{derive_seed, FundusSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Every method produces this many new samples per original.
pub const AUGMENTS_PER_METHOD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    Rotate,
    GaussianNoise,
    ColorJitter,
    Flips,
}

impl AugmentMethod {
    pub const ALL: [AugmentMethod; 4] = [
        AugmentMethod::Rotate,
        AugmentMethod::GaussianNoise,
        AugmentMethod::ColorJitter,
        AugmentMethod::Flips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentMethod::Rotate => "rotate",
            AugmentMethod::GaussianNoise => "gaussian_noise",
            AugmentMethod::ColorJitter => "color_jitter",
            AugmentMethod::Flips => "flips",
        }
    }
}

impl std::str::FromStr for AugmentMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AugmentMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    /// Standard deviation of additive noise, in [0, 1] intensity units.
    pub noise_sigma: f64,
    /// Brightness, contrast and saturation factors are drawn from `1 ± jitter`.
    pub jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_sigma: 0.02,
            jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    Horizontal,
    Vertical,
    /// Reflection across the main diagonal; square inputs only.
    Transpose,
}

fn map_planes<T: Scalar>(t: &Tensor<T>, f: impl Fn(&[T], usize, usize) -> Vec<T>) -> Result<Tensor<T>> {
    let dims = t.dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let mut data = Vec::with_capacity(t.numel());
    for plane in t.data().chunks(h * w) {
        data.extend(f(plane, h, w));
    }
    Tensor::from_vec(dims.to_vec(), data)
}

fn flip_tensor<T: Scalar>(t: &Tensor<T>, kind: Flip) -> Result<Tensor<T>> {
    map_planes(t, |p, h, w| {
        (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                match kind {
                    Flip::Horizontal => p[r * w + (w - 1 - c)],
                    Flip::Vertical => p[(h - 1 - r) * w + c],
                    Flip::Transpose => p[c * w + r],
                }
            })
            .collect()
    })
}

/// Applies a flip to image, mask and fov together.
pub fn flip<T: Scalar>(sample: &FundusSample<T>, kind: Flip) -> Result<FundusSample<T>> {
    if kind == Flip::Transpose && sample.height() != sample.width() {
        return Err(Error::Data(format!(
            "{}: diagonal flip needs a square sample, got {}x{}",
            sample.id,
            sample.height(),
            sample.width()
        )));
    }
    let name = match kind {
        Flip::Horizontal => "horizontal",
        Flip::Vertical => "vertical",
        Flip::Transpose => "diagonal",
    };
    Ok(sample.derived(
        name,
        flip_tensor(&sample.image, kind)?,
        flip_tensor(&sample.mask, kind)?,
        sample.fov.as_ref().map(|f| flip_tensor(f, kind)).transpose()?,
        "flips",
        name.to_string(),
    ))
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Source coordinate of output pixel `(r, c)` under rotation about the centre.
fn rotation_source(r: usize, c: usize, h: usize, w: usize, cos: f64, sin: f64) -> (f64, f64) {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (dy, dx) = (r as f64 - cy, c as f64 - cx);
    (snap(cy + cos * dy - sin * dx), snap(cx + sin * dy + cos * dx))
}

fn rotate_nearest<T: Scalar>(t: &Tensor<T>, cos: f64, sin: f64) -> Result<Tensor<T>> {
    map_planes(t, |p, h, w| {
        (0..h * w)
            .map(|i| {
                let (sy, sx) = rotation_source(i / w, i % w, h, w, cos, sin);
                let (ry, rx) = (sy.round(), sx.round());
                if ry >= 0.0 && rx >= 0.0 && (ry as usize) < h && (rx as usize) < w {
                    p[ry as usize * w + rx as usize]
                } else {
                    T::zero()
                }
            })
            .collect()
    })
}

fn rotate_bilinear<T: Scalar>(t: &Tensor<T>, cos: f64, sin: f64) -> Result<Tensor<T>> {
    map_planes(t, |p, h, w| {
        let at = |y: i64, x: i64| -> f64 {
            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                p[y as usize * w + x as usize].to_f64_lossy()
            } else {
                0.0
            }
        };
        (0..h * w)
            .map(|i| {
                let (sy, sx) = rotation_source(i / w, i % w, h, w, cos, sin);
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let (y0, x0) = (y0 as i64, x0 as i64);
                let v = at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + at(y0, x0 + 1) * (1.0 - fy) * fx
                    + at(y0 + 1, x0) * fy * (1.0 - fx)
                    + at(y0 + 1, x0 + 1) * fy * fx;
                T::lit(v)
            })
            .collect()
    })
}

/// Rotates clockwise by `degrees` about the image centre with zero fill;
/// bilinear for the image, nearest neighbour for mask and fov.
pub fn rotate<T: Scalar>(sample: &FundusSample<T>, degrees: f64) -> Result<FundusSample<T>> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    Ok(sample.derived(
        &format!("rot{degrees:.3}"),
        rotate_bilinear(&sample.image, cos, sin)?,
        rotate_nearest(&sample.mask, cos, sin)?,
        sample.fov.as_ref().map(|f| rotate_nearest(f, cos, sin)).transpose()?,
        "rotate",
        format!("angle={degrees}"),
    ))
}

fn add_noise<T: Scalar, R: Rng + ?Sized>(sample: &FundusSample<T>, sigma: f64, k: usize, rng: &mut R) -> Result<FundusSample<T>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
    let data = sample
        .image
        .data()
        .iter()
        .map(|&v| T::lit((v.to_f64_lossy() + normal.sample(rng)).clamp(0.0, 1.0)))
        .collect();
    Ok(sample.derived(
        &format!("noise{k}"),
        Tensor::from_vec(sample.image.shape(), data)?,
        sample.mask.clone(),
        sample.fov.clone(),
        "gaussian_noise",
        format!("sigma={sigma},draw={k}"),
    ))
}

fn jitter_colors<T: Scalar, R: Rng + ?Sized>(
    sample: &FundusSample<T>,
    amount: f64,
    k: usize,
    rng: &mut R,
) -> Result<FundusSample<T>> {
    let mut factor = || {
        if amount > 0.0 {
            rng.random_range(1.0 - amount..=1.0 + amount)
        } else {
            1.0
        }
    };
    let (brightness, contrast, saturation) = (factor(), factor(), factor());
    let plane = sample.height() * sample.width();
    let mut rgb: Vec<f64> = sample.image.data().iter().map(|v| v.to_f64_lossy() * brightness).collect();
    let gray = |rgb: &[f64], i: usize| 0.299 * rgb[i] + 0.587 * rgb[plane + i] + 0.114 * rgb[2 * plane + i];
    let mean_gray = (0..plane).map(|i| gray(&rgb, i)).sum::<f64>() / plane as f64;
    for v in &mut rgb {
        *v = (*v - mean_gray) * contrast + mean_gray;
    }
    for i in 0..plane {
        let g = gray(&rgb, i);
        for ch in 0..3 {
            let v = &mut rgb[ch * plane + i];
            *v = g + (*v - g) * saturation;
        }
    }
    let data = rgb.into_iter().map(|v| T::lit(v.clamp(0.0, 1.0))).collect();
    Ok(sample.derived(
        &format!("jitter{k}"),
        Tensor::from_vec(sample.image.shape(), data)?,
        sample.mask.clone(),
        sample.fov.clone(),
        "color_jitter",
        format!("brightness={brightness},contrast={contrast},saturation={saturation}"),
    ))
}

/// Three new samples from `sample` using `method`.
pub fn augment<T: Scalar, R: Rng + ?Sized>(
    sample: &FundusSample<T>,
    method: AugmentMethod,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<FundusSample<T>>> {
    match method {
        AugmentMethod::Rotate => (0..AUGMENTS_PER_METHOD)
            .map(|_| {
                let mut angle = 0.0;
                while angle == 0.0 {
                    angle = rng.random_range(0.0..360.0);
                }
                rotate(sample, angle)
            })
            .collect(),
        AugmentMethod::GaussianNoise => (0..AUGMENTS_PER_METHOD)
            .map(|k| add_noise(sample, cfg.noise_sigma, k, rng))
            .collect(),
        AugmentMethod::ColorJitter => (0..AUGMENTS_PER_METHOD)
            .map(|k| jitter_colors(sample, cfg.jitter, k, rng))
            .collect(),
        AugmentMethod::Flips => [Flip::Horizontal, Flip::Vertical, Flip::Transpose]
            .into_iter()
            .map(|f| flip(sample, f))
            .collect(),
    }
}

/// All originals plus augmented samples, subsampled uniformly to exactly
/// `target_total`. Each (original, method) pair draws from its own stream
/// derived from `seed`, so the result does not depend on evaluation order.
pub fn build_augmented_set<T: Scalar>(
    originals: &[FundusSample<T>],
    target_total: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Vec<FundusSample<T>>> {
    if originals.is_empty() {
        return Err(Error::Data("no samples to augment".into()));
    }
    if target_total < originals.len() {
        return Err(Error::Config(format!(
            "target of {target_total} samples is below the {} originals",
            originals.len()
        )));
    }
    let needed = target_total - originals.len();
    let pool: Vec<FundusSample<T>> = if needed == 0 {
        Vec::new()
    } else {
        let per_original: Vec<Vec<FundusSample<T>>> = originals
            .par_iter()
            .map(|s| {
                let mut out = Vec::with_capacity(AugmentMethod::ALL.len() * AUGMENTS_PER_METHOD);
                for method in AugmentMethod::ALL {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&s.id, method.name()]));
                    out.extend(augment(s, method, cfg, &mut rng)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        per_original.into_iter().flatten().collect()
    };
    if needed > pool.len() {
        return Err(Error::Config(format!(
            "{} originals yield at most {} samples, {target_total} requested",
            originals.len(),
            originals.len() + pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["subsample"]));
    let mut chosen = rand::seq::index::sample(&mut rng, pool.len(), needed).into_vec();
    chosen.sort_unstable();
    let mut out = originals.to_vec();
    let mut pool: Vec<Option<FundusSample<T>>> = pool.into_iter().map(Some).collect();
    out.extend(chosen.into_iter().map(|i| pool[i].take().expect("sampled once")));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Lineage;

    fn sample(h: usize, w: usize) -> FundusSample<f64> {
        let image = Tensor::from_vec([3, h, w], (0..3 * h * w).map(|i| (i % 17) as f64 / 16.0).collect()).unwrap();
        let mask = Tensor::from_vec([1, h, w], (0..h * w).map(|i| ((i * 7) % 5 == 0) as u8 as f64).collect()).unwrap();
        FundusSample::new("s", image, mask, None).unwrap()
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let s = sample(5, 7);
        let twice = flip(&flip(&s, Flip::Horizontal).unwrap(), Flip::Horizontal).unwrap();
        assert_eq!(twice.image.data(), s.image.data());
        assert_eq!(twice.mask.data(), s.mask.data());
    }

    #[test]
    fn transpose_needs_square() {
        assert!(flip(&sample(5, 7), Flip::Transpose).is_err());
        assert!(flip(&sample(6, 6), Flip::Transpose).is_ok());
    }

    #[test]
    fn photometric_methods_keep_the_mask() {
        let s = sample(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for method in [AugmentMethod::GaussianNoise, AugmentMethod::ColorJitter] {
            let out = augment(&s, method, &AugmentConfig::default(), &mut rng).unwrap();
            assert_eq!(out.len(), 3);
            for o in out {
                assert_eq!(o.mask.data(), s.mask.data());
                assert!(o.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn quarter_turn_index_map() {
        let s = sample(6, 6);
        let r = rotate(&s, 90.0).unwrap();
        let h = 6;
        for row in 0..h {
            for col in 0..h {
                assert_eq!(r.mask.data()[col * h + (h - 1 - row)], s.mask.data()[row * h + col]);
                for ch in 0..3 {
                    let dst = ch * 36 + col * h + (h - 1 - row);
                    assert!((r.image.data()[dst] - s.image.data()[ch * 36 + row * h + col]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn every_method_yields_three_with_lineage() {
        let s = sample(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for method in AugmentMethod::ALL {
            let out = augment(&s, method, &AugmentConfig::default(), &mut rng).unwrap();
            assert_eq!(out.len(), 3);
            for o in out {
                match &o.lineage {
                    Lineage::Augmented { parent, method: m, .. } => {
                        assert_eq!(parent, "s");
                        assert_eq!(m, method.name());
                    }
                    Lineage::Original => panic!("augmented sample marked original"),
                }
            }
        }
    }
}
