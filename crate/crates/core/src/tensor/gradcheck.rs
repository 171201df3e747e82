//! Finite-difference verification of analytic gradients (64-bit only).

use rayon::prelude::*;

use super::{backward, Tensor};
use crate::error::{Error, Result};

/// Relative finite-difference step, scaled by `max(1, |x|)`.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that gradients that are zero
/// up to round-off are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, serde::Serialize)]
pub struct InputReport {
    pub index: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub inputs: Vec<InputReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tol
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of the scalar function `f` against central
/// differences for every element of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + Sync,
{
    grad_check_sampled(f, inputs, tol, None)
}

/// Like [`grad_check`], checking at most `limit` evenly spaced elements per input.
pub fn grad_check_sampled<F>(
    f: F,
    inputs: &[Tensor<f64>],
    tol: f64,
    limit: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + Sync,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach().requires_grad()).collect();
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(Error::NonScalarBackward(out.dims().to_vec()));
    }
    backward(&out)?;

    let plain: Vec<Tensor<f64>> = inputs.iter().map(Tensor::detach).collect();
    let mut reports = Vec::with_capacity(inputs.len());
    for (index, leaf) in leaves.iter().enumerate() {
        let analytic = leaf
            .grad()
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let n = leaf.numel();
        let stride = limit.map_or(1, |l| n.div_ceil(l.max(1)));
        let elements: Vec<usize> = (0..n).step_by(stride).collect();
        let numeric: Vec<Result<f64>> = elements
            .par_iter()
            .map(|&e| {
                let x = plain[index].data()[e];
                let h = FD_STEP * x.abs().max(1.0);
                let eval = |v: f64| -> Result<f64> {
                    let mut data = plain[index].to_vec();
                    data[e] = v;
                    let mut args = plain.clone();
                    args[index] = Tensor::from_vec(plain[index].shape().clone(), data)?;
                    f(&args)?.item()
                };
                let (hi, lo) = (x + h, x - h);
                Ok((eval(hi)? - eval(lo)?) / (hi - lo))
            })
            .collect();
        let mut report = InputReport {
            index,
            checked: elements.len(),
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (&e, num) in elements.iter().zip(numeric) {
            let num = num?;
            let err = rel_error(analytic[e], num);
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst_element = e;
                report.analytic = analytic[e];
                report.numeric = num;
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        tol,
        inputs: reports,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::tensor::{custom_op, mul, scale, sum};

    #[test]
    fn identity_has_zero_error() {
        let x = Tensor::from_vec([1], vec![0.7]).unwrap();
        let r = grad_check(|a| Ok(a[0].clone()), &[x], 1e-12).unwrap();
        assert_eq!(r.max_rel_error(), 0.0);
        assert!(r.passed());
    }

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_vec([4], vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let c = Tensor::from_vec([4], vec![1.5, -2.0, 0.25, 3.0]).unwrap();
        let r = grad_check(|a| Ok(sum(&scale(&mul(&a[0], &c)?, 2.0))), &[x], 1e-10).unwrap();
        assert!(r.max_rel_error() < 1e-10, "{}", r.max_rel_error());
    }

    #[test]
    fn wrong_backward_is_detected() {
        let x = Tensor::from_vec([3], vec![0.5, 1.0, -0.5]).unwrap();
        let f = |a: &[Tensor<f64>]| {
            let data: Vec<f64> = a[0].data().iter().map(|v| v * v).collect();
            let n = a[0].numel();
            // d(x^2)/dx is 2x; report x instead.
            let xs = a[0].to_vec();
            let y = custom_op(
                vec![a[0].clone()],
                a[0].shape().clone(),
                data,
                Arc::new(move |g: &[f64]| vec![(0..n).map(|i| g[i] * xs[i]).collect()]),
            )?;
            Ok(sum(&y))
        };
        let r = grad_check(f, &[x], 1e-4).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let x = Tensor::from_vec([2], vec![1.0, 2.0]).unwrap();
        assert!(grad_check(|a| Ok(a[0].clone()), &[x], 1e-4).is_err());
    }
}
