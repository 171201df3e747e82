//! 8-bit PNG reading and writing for images, masks and prediction overlays.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGB image as `[3, h, w]` scaled to [0, 1].
pub fn read_rgb<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![T::zero(); 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for ch in 0..3 {
            data[ch * h * w + y as usize * w + x as usize] = T::lit(px[ch] as f64 / 255.0);
        }
    }
    Tensor::from_vec([3, h, w], data)
}

/// Binary mask as `[1, h, w]`; any pixel brighter than mid-gray is foreground.
pub fn read_mask<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| if p[0] > 127 { T::one() } else { T::zero() })
        .collect();
    Tensor::from_vec([1, h, w], data)
}

fn plane_dims<T: Scalar>(t: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    match t.dims() {
        [c, h, w] if *c == channels => Ok((*h, *w)),
        [1, c, h, w] if *c == channels => Ok((*h, *w)),
        d => Err(Error::shape(format!("expected {channels} channel(s) of shape [c, h, w], got {d:?}"))),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_rgb<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let (h, w) = plane_dims(t, 3)?;
    let d = t.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([to_u8(d[i]), to_u8(d[h * w + i]), to_u8(d[2 * h * w + i])])
    });
    ensure_parent(path)?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Grayscale image of a single-channel map (probabilities or a binary mask).
pub fn write_gray<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let (h, w) = plane_dims(t, 1)?;
    let d = t.data();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([to_u8(d[y as usize * w + x as usize])]));
    ensure_parent(path)?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// The input in grayscale with predicted vessels painted into the green channel.
pub fn write_overlay<T: Scalar>(path: &Path, image: &Tensor<T>, prediction: &Tensor<T>) -> Result<()> {
    let (h, w) = plane_dims(image, 3)?;
    if plane_dims(prediction, 1)? != (h, w) {
        return Err(Error::shape(format!(
            "overlay prediction {:?} does not match image {:?}",
            prediction.dims(),
            image.dims()
        )));
    }
    let (d, p) = (image.data(), prediction.data());
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let gray = (d[i].to_f64_lossy() + d[h * w + i].to_f64_lossy() + d[2 * h * w + i].to_f64_lossy()) / 3.0;
        let g = T::lit(gray);
        if p[i].to_f64_lossy() >= 0.5 {
            Rgb([to_u8(g) / 2, 255, to_u8(g) / 2])
        } else {
            Rgb([to_u8(g), to_u8(g), to_u8(g)])
        }
    });
    ensure_parent(path)?;
    img.save(path).map_err(|e| image_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::<f64>::from_vec([3, 2, 3], (0..18).map(|i| i as f64 / 255.0).collect()).unwrap();
        write_rgb(&dir.path().join("a.png"), &img).unwrap();
        let back: Tensor<f64> = read_rgb(&dir.path().join("a.png")).unwrap();
        assert_eq!(back.dims(), &[3, 2, 3]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mask = Tensor::<f32>::from_vec([1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        write_gray(&dir.path().join("m.png"), &mask).unwrap();
        let back: Tensor<f32> = read_mask(&dir.path().join("m.png")).unwrap();
        assert_eq!(back.data(), mask.data());
    }

    #[test]
    fn overlay_dims_follow_input() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::<f32>::zeros([3, 5, 7]).unwrap();
        let pred = Tensor::<f32>::ones([1, 5, 7]).unwrap();
        let path = dir.path().join("o.png");
        write_overlay(&path, &img, &pred).unwrap();
        let back: Tensor<f32> = read_rgb(&path).unwrap();
        assert_eq!(back.dims(), &[3, 5, 7]);
        assert!(write_overlay(&path, &img, &Tensor::<f32>::ones([1, 5, 6]).unwrap()).is_err());
    }
}
