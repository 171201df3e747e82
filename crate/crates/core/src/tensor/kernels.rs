//! Convolution kernels on raw NCHW buffers via im2col and small GEMMs.
//!
//! Every output element is produced by exactly one task in a fixed
//! summation order, so results do not depend on the rayon pool size.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Geometry of a cross-correlation `x[n,cin,h,w] * w[cout,cin,kh,kw] -> y[n,cout,oh,ow]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }
}

const PAR_THRESHOLD: usize = 1 << 15;

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T]) -> Vec<T> {
    let (k, p) = (g.k(), g.p());
    let mut col = vec![T::zero(); k * p];
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let dst_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(g: &ConvGeom, col: &[T]) -> Vec<T> {
    let p = g.p();
    let mut x = vec![T::zero(); g.cin * g.h * g.w];
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight fixed accumulator lanes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += ac[l] * bc[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `c[m,n] = a[m,k] * b[k,n]`.
fn gemm_nn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let row = |(i, c_row): (usize, &mut [T])| {
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], c_row);
        }
    };
    if m * n * k >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `c[k,n] = a[m,k]^T * b[m,n]`.
fn gemm_tn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let row = |(i, c_row): (usize, &mut [T])| {
        for p in 0..m {
            axpy(a[p * k + i], &b[p * n..(p + 1) * n], c_row);
        }
    };
    if m * n * k >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `c[m,k] = a[m,n] * b[k,n]^T`.
fn gemm_nt<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let row = |(i, c_row): (usize, &mut [T])| {
        let a_row = &a[i * n..(i + 1) * n];
        for (j, cij) in c_row.iter_mut().enumerate() {
            *cij = dot(a_row, &b[j * n..(j + 1) * n]);
        }
    };
    if m * n * k >= PAR_THRESHOLD {
        c.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        c.chunks_mut(k).enumerate().for_each(row);
    }
}

pub(crate) fn conv_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let (k, p) = (g.k(), g.p());
    let in_per = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); g.n * g.cout * p];
    out.par_chunks_mut(g.cout * p)
        .enumerate()
        .for_each(|(i, y)| {
            let xs = &x[i * in_per..(i + 1) * in_per];
            if g.is_pointwise() {
                gemm_nn(g.cout, p, k, w, xs, y);
            } else {
                let col = im2col(g, xs);
                gemm_nn(g.cout, p, k, w, &col, y);
            }
            if let Some(b) = bias {
                for (co, plane) in y.chunks_mut(p).enumerate() {
                    for v in plane {
                        *v += b[co];
                    }
                }
            }
        });
    out
}

pub(crate) fn conv_backward_input<T: Scalar>(g: &ConvGeom, w: &[T], dy: &[T]) -> Vec<T> {
    let (k, p) = (g.k(), g.p());
    let in_per = g.cin * g.h * g.w;
    let mut dx = vec![T::zero(); g.n * in_per];
    dx.par_chunks_mut(in_per).enumerate().for_each(|(i, dxs)| {
        let dys = &dy[i * g.cout * p..(i + 1) * g.cout * p];
        if g.is_pointwise() {
            gemm_tn(g.cout, p, k, w, dys, dxs);
        } else {
            let mut dcol = vec![T::zero(); k * p];
            gemm_tn(g.cout, p, k, w, dys, &mut dcol);
            dxs.copy_from_slice(&col2im(g, &dcol));
        }
    });
    dx
}

pub(crate) fn conv_backward_weight<T: Scalar>(g: &ConvGeom, x: &[T], dy: &[T]) -> Vec<T> {
    let (k, p) = (g.k(), g.p());
    let in_per = g.cin * g.h * g.w;
    let partials: Vec<Vec<T>> = (0..g.n)
        .into_par_iter()
        .map(|i| {
            let xs = &x[i * in_per..(i + 1) * in_per];
            let dys = &dy[i * g.cout * p..(i + 1) * g.cout * p];
            let mut dw = vec![T::zero(); g.cout * k];
            if g.is_pointwise() {
                gemm_nt(g.cout, p, k, dys, xs, &mut dw);
            } else {
                let col = im2col(g, xs);
                gemm_nt(g.cout, p, k, dys, &col, &mut dw);
            }
            dw
        })
        .collect();
    let mut dw = vec![T::zero(); g.cout * k];
    for part in &partials {
        for (a, &b) in dw.iter_mut().zip(part) {
            *a += b;
        }
    }
    dw
}

pub(crate) fn bias_grad<T: Scalar>(n: usize, c: usize, plane: usize, dy: &[T]) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for i in 0..n {
        for (ch, acc) in db.iter_mut().enumerate() {
            let base = (i * c + ch) * plane;
            *acc += dy[base..base + plane].iter().copied().sum::<T>();
        }
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn gemm_variants_agree() {
        let (m, n, k) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm_nn(m, n, k, &a, &b, &mut c);
        for i in 0..m {
            for j in 0..n {
                let e: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - e).abs() < 1e-12);
            }
        }
        // a^T (k x m) times c (m x n) through gemm_tn.
        let mut t = vec![0.0; k * n];
        gemm_tn(m, n, k, &a, &c, &mut t);
        for i in 0..k {
            for j in 0..n {
                let e: f64 = (0..m).map(|p| a[p * k + i] * c[p * n + j]).sum();
                assert!((t[i * n + j] - e).abs() < 1e-12);
            }
        }
        // c (m x n) times b^T where b is viewed as (k x n).
        let mut u = vec![0.0; m * k];
        gemm_nt(m, n, k, &c, &b, &mut u);
        for i in 0..m {
            for j in 0..k {
                let e: f64 = (0..n).map(|p| c[i * n + p] * b[j * n + p]).sum();
                assert!((u[i * k + j] - e).abs() < 1e-12);
            }
        }
    }
}
