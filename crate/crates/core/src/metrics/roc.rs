use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// ROC points `(false-positive rate, true-positive rate)` from (0,0) to (1,1).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

pub(crate) fn collect_scores<T: Scalar>(
    prob: &Tensor<T>,
    gt: &Tensor<T>,
    region: Option<&Tensor<T>>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if prob.shape() != gt.shape() || region.is_some_and(|r| r.shape() != gt.shape()) {
        return Err(Error::shape("scores, labels and region must share a shape"));
    }
    let mut scores = Vec::with_capacity(prob.numel());
    let mut labels = Vec::with_capacity(prob.numel());
    for i in 0..prob.numel() {
        if let Some(r) = region {
            if r.data()[i] == T::zero() {
                continue;
            }
        }
        let g = gt.data()[i];
        if g != T::zero() && g != T::one() {
            return Err(Error::invalid("ground truth is not binary"));
        }
        scores.push(prob.data()[i].to_f64_lossy());
        labels.push(g == T::one());
    }
    Ok((scores, labels))
}

/// Area under the ROC curve via the Mann-Whitney rank statistic with
/// midranks for ties. `None` when either class is absent.
pub fn roc_auc_scores(scores: &[f64], labels: &[bool]) -> (Option<f64>, RocCurve) {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] {
                pos_rank_sum += mid;
            }
        }
        i = j + 1;
    }

    let mut points = vec![(0.0, 0.0)];
    if n_pos > 0 && n_neg > 0 {
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut k = order.len();
        while k > 0 {
            let score = scores[order[k - 1]];
            while k > 0 && scores[order[k - 1]] == score {
                if labels[order[k - 1]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                k -= 1;
            }
            points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        }
    } else {
        points.push((1.0, 1.0));
    }
    let curve = RocCurve { points };

    if n_pos == 0 || n_neg == 0 {
        return (None, curve);
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    (Some(u / (p * q)), curve)
}

/// AUC and ROC curve of a probability map against a binary mask.
pub fn roc_auc<T: Scalar>(
    prob: &Tensor<T>,
    gt: &Tensor<T>,
    region: Option<&Tensor<T>>,
) -> Result<(Option<f64>, RocCurve)> {
    let (scores, labels) = collect_scores(prob, gt, region)?;
    Ok(roc_auc_scores(&scores, &labels))
}
