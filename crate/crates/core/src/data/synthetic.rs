use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::FundusSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Desk-scale benchmark parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub train_count: usize,
    pub test_count: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_count: 200,
            test_count: 50,
            height: 64,
            width: 64,
        }
    }
}

// Masks outside this band are redrawn.
const TARGET_FRACTION: (f64, f64) = (0.05, 0.15);
const MAX_ATTEMPTS: usize = 1000;
const TINT: [f64; 3] = [1.0, 0.75, 0.45];
const VESSEL_CONTRAST: f64 = 0.22;
const NOISE_SIGMA: f64 = 0.03;

fn draw_mask<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Vec<bool> {
    let mut mask = vec![false; h * w];
    let (hf, wf) = (h as f64, w as f64);
    let span = hf.min(wf);
    for _ in 0..rng.random_range(2..=5) {
        let (p0, p2) = loop {
            let a = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
            let b = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
            if ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() >= span / 2.0 {
                break (a, b);
            }
        };
        let p1 = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
        let radius = rng.random_range(1..=3) as f64 / 2.0;
        let steps = 4 * (h + w);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let u = 1.0 - t;
            let y = u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0;
            let x = u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1;
            let r = radius.ceil() as i64;
            for py in (y.round() as i64 - r)..=(y.round() as i64 + r) {
                for px in (x.round() as i64 - r)..=(x.round() as i64 + r) {
                    if py < 0 || px < 0 || py >= h as i64 || px >= w as i64 {
                        continue;
                    }
                    if (py as f64 - y).powi(2) + (px as f64 - x).powi(2) <= radius * radius {
                        mask[py as usize * w + px as usize] = true;
                    }
                }
            }
        }
    }
    mask
}

fn blur(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    // 3x3 binomial kernel with edge clamping
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let at = |y: i64, x: i64| {
        let y = y.clamp(0, h as i64 - 1) as usize;
        let x = x.clamp(0, w as i64 - 1) as usize;
        mask[y * w + x] as u8 as f64
    };
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let mut acc = 0.0;
            for (dy, ky) in K.iter().enumerate() {
                for (dx, kx) in K.iter().enumerate() {
                    acc += ky * kx * at(y + dy as i64 - 1, x + dx as i64 - 1);
                }
            }
            acc
        })
        .collect()
}

fn one_sample<T: Scalar, R: Rng + ?Sized>(index: usize, h: usize, w: usize, rng: &mut R) -> Result<FundusSample<T>> {
    let mask = (0..MAX_ATTEMPTS)
        .map(|_| draw_mask(h, w, rng))
        .find(|m| {
            let frac = m.iter().filter(|&&b| b).count() as f64 / m.len() as f64;
            (TARGET_FRACTION.0..=TARGET_FRACTION.1).contains(&frac)
        })
        .ok_or_else(|| Error::Data(format!("could not draw a {h}x{w} vessel mask in the target density band")))?;
    let vessels = blur(&mask, h, w);
    let base = rng.random_range(0.12..0.22);
    let (gy, gx) = (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08));
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let plane = h * w;
    let mut image = vec![T::zero(); 3 * plane];
    for ch in 0..3 {
        for i in 0..plane {
            let (y, x) = ((i / w) as f64 / h as f64 - 0.5, (i % w) as f64 / w as f64 - 0.5);
            let v = TINT[ch] * (base + gy * y + gx * x + VESSEL_CONTRAST * vessels[i]) + noise.sample(rng);
            image[ch * plane + i] = T::lit(v.clamp(0.0, 1.0));
        }
    }
    FundusSample::new(
        format!("synthetic-{index:04}"),
        Tensor::from_vec([3, h, w], image)?,
        Tensor::from_vec([1, h, w], mask.into_iter().map(|b| if b { T::one() } else { T::zero() }).collect())?,
        None,
    )
}

/// Dark fundus-like images with 2–5 bright curved vessels each.
pub fn generate_synthetic_dataset<T: Scalar, R: Rng + ?Sized>(
    count: usize,
    size: (usize, usize),
    rng: &mut R,
) -> Result<Vec<FundusSample<T>>> {
    let (h, w) = size;
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Config(format!("synthetic size {h}x{w} must be a nonzero multiple of 8")));
    }
    if count == 0 {
        return Err(Error::Config("synthetic count must be positive".into()));
    }
    (0..count).map(|i| one_sample(i, h, w, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_band_and_ranges() {
        let set: Vec<FundusSample<f32>> =
            generate_synthetic_dataset(1000, (64, 64), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        for s in &set {
            let f = s.positive_fraction();
            assert!((0.03..=0.20).contains(&f), "{}: {f}", s.id);
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn vessels_are_brighter_than_background() {
        let set: Vec<FundusSample<f64>> =
            generate_synthetic_dataset(20, (64, 64), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for s in &set {
            let green = &s.image.data()[64 * 64..2 * 64 * 64];
            let (mut on, mut off, mut n_on) = (0.0, 0.0, 0.0);
            for (g, m) in green.iter().zip(s.mask.data()) {
                if *m == 1.0 {
                    on += g;
                    n_on += 1.0;
                } else {
                    off += g;
                }
            }
            assert!(on / n_on > off / (4096.0 - n_on) + 0.05);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a: Vec<FundusSample<f32>> = generate_synthetic_dataset(3, (32, 32), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b: Vec<FundusSample<f32>> = generate_synthetic_dataset(3, (32, 32), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image.data(), y.image.data());
            assert_eq!(x.mask.data(), y.mask.data());
        }
    }

    #[test]
    fn rejects_bad_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_synthetic_dataset::<f32, _>(1, (60, 64), &mut rng).is_err());
    }
}
