use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn binary_values<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<Vec<bool>> {
    t.data()
        .iter()
        .map(|&v| {
            if v == T::one() {
                Ok(true)
            } else if v == T::zero() {
                Ok(false)
            } else {
                Err(Error::invalid(format!("{what} is not binary (found {v})")))
            }
        })
        .collect()
}

/// Pixelwise confusion counts, restricted to `region` when given.
pub fn confusion<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, region: Option<&Tensor<T>>) -> Result<ConfusionCounts> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and ground truth {:?} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    let p = binary_values(pred, "prediction")?;
    let g = binary_values(gt, "ground truth")?;
    let r = match region {
        Some(r) if r.shape() != gt.shape() => {
            return Err(Error::shape("evaluation region does not match the mask"));
        }
        Some(r) => Some(binary_values(r, "region")?),
        None => None,
    };
    let mut c = ConfusionCounts::default();
    for i in 0..p.len() {
        if r.as_ref().is_some_and(|r| !r[i]) {
            continue;
        }
        match (p[i], g[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Sensitivity, specificity, accuracy and F1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BasicMetrics {
    pub se: Option<f64>,
    pub sp: Option<f64>,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn basic_metrics(c: &ConfusionCounts) -> BasicMetrics {
    BasicMetrics {
        se: ratio(c.tp, c.tp + c.fn_),
        sp: ratio(c.tn, c.tn + c.fp),
        acc: ratio(c.tp + c.tn, c.total()),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

/// Matthews correlation coefficient with exact integer products.
pub fn mcc(c: &ConfusionCounts) -> Option<f64> {
    let (tp, fp, fn_, tn) = (c.tp as u128, c.fp as u128, c.fn_ as u128, c.tn as u128);
    let left = (tp + fp) * (tp + fn_);
    let right = (tn + fp) * (tn + fn_);
    if left == 0 || right == 0 {
        return None;
    }
    let num = (tp * tn) as i128 - (fp * fn_) as i128;
    Some(num as f64 / ((left as f64).sqrt() * (right as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn confusion_cases() {
        let gt = mask(&[1.0, 0.0, 0.0, 1.0]);
        let c = confusion(&gt, &gt, None).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let inv = mask(&[0.0, 1.0, 1.0, 0.0]);
        let c = confusion(&inv, &gt, None).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let c = confusion(&mask(&[1.0, 1.0, 0.0, 0.0]), &gt, None).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 1, 1, 1));
    }

    #[test]
    fn confusion_region_and_errors() {
        let gt = mask(&[1.0, 0.0, 0.0, 1.0]);
        let pred = mask(&[1.0, 1.0, 0.0, 0.0]);
        let region = mask(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(confusion(&pred, &gt, Some(&region)).unwrap(), ConfusionCounts::new(1, 1, 0, 0));
        assert!(confusion(&mask(&[0.5, 0.0, 0.0, 1.0]), &gt, None).is_err());
        assert!(confusion(&mask(&[1.0]), &gt, None).is_err());
    }

    #[test]
    fn basic_metric_values() {
        let perfect = ConfusionCounts::new(3, 0, 0, 5);
        let b = basic_metrics(&perfect);
        assert_eq!((b.se, b.sp, b.acc, b.f1), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        let b = basic_metrics(&ConfusionCounts::new(1, 1, 1, 1));
        assert_eq!((b.se, b.sp, b.acc, b.f1), (Some(0.5), Some(0.5), Some(0.5), Some(0.5)));
        let b = basic_metrics(&ConfusionCounts::new(0, 2, 0, 6));
        assert_eq!(b.se, None);
        assert_eq!(b.sp, Some(0.75));
        assert_eq!(b.acc, Some(0.75));
    }

    #[test]
    fn mcc_values() {
        assert_eq!(mcc(&ConfusionCounts::new(4, 0, 0, 6)), Some(1.0));
        assert_eq!(mcc(&ConfusionCounts::new(0, 5, 5, 0)), Some(-1.0));
        let v = mcc(&ConfusionCounts::new(2, 1, 1, 3)).unwrap();
        assert!((v - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(mcc(&ConfusionCounts::new(0, 0, 3, 4)), None);
    }

    #[test]
    fn mcc_handles_large_counts() {
        let c = ConfusionCounts::new(60_000_000, 7_000_000, 9_000_000, 900_000_000);
        let exact = {
            let (tp, fp, fn_, tn) = (6e7f64, 7e6, 9e6, 9e8);
            (tp * tn - fp * fn_) / ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt()
        };
        assert!((mcc(&c).unwrap() - exact).abs() < 1e-12);
    }
}
