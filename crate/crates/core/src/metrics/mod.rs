//! Pixel-level binary segmentation metrics.
//!
//! Undefined values (zero denominators, single-class regions) are reported
//! as `None` rather than as zero or NaN.

mod confusion;
mod roc;

pub use confusion::{basic_metrics, confusion, mcc, BasicMetrics, ConfusionCounts};
pub use roc::{roc_auc, roc_auc_scores, RocCurve};

use crate::error::{Error, Result};
use crate::model::predict_binary;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The six reported columns.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub se: Option<f64>,
    pub sp: Option<f64>,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = ["SE", "SP", "ACC", "AUC", "F1", "MCC"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.se, self.sp, self.acc, self.auc, self.f1, self.mcc]
    }

    pub fn from_counts(counts: &ConfusionCounts, auc: Option<f64>) -> Self {
        let b = basic_metrics(counts);
        MetricReport {
            se: b.se,
            sp: b.sp,
            acc: b.acc,
            auc,
            f1: b.f1,
            mcc: mcc(counts),
        }
    }
}

/// How per-image results are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Aggregation {
    /// Metrics over the pooled pixels of all images.
    #[default]
    Pooled,
    /// Mean of per-image metrics, skipping images where a metric is undefined.
    PerImage,
}

/// Collects predictions image by image and produces a [`MetricReport`].
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    threshold: f64,
    aggregation: Aggregation,
    counts: ConfusionCounts,
    scores: Vec<f64>,
    labels: Vec<bool>,
    per_image: Vec<MetricReport>,
}

impl MetricAccumulator {
    pub fn new(threshold: f64, aggregation: Aggregation) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
        }
        Ok(MetricAccumulator {
            threshold,
            aggregation,
            ..Default::default()
        })
    }

    /// Adds one image: probabilities, binary ground truth and optional region.
    pub fn add<T: Scalar>(&mut self, prob: &Tensor<T>, gt: &Tensor<T>, region: Option<&Tensor<T>>) -> Result<()> {
        let pred = predict_binary(prob, self.threshold)?;
        let c = confusion(&pred, gt, region)?;
        let (scores, labels) = roc::collect_scores(prob, gt, region)?;
        match self.aggregation {
            Aggregation::Pooled => {
                self.counts += c;
                self.scores.extend(scores);
                self.labels.extend(labels);
            }
            Aggregation::PerImage => {
                let (auc, _) = roc_auc_scores(&scores, &labels);
                self.per_image.push(MetricReport::from_counts(&c, auc));
                self.counts += c;
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> ConfusionCounts {
        self.counts
    }

    pub fn finish(&self) -> MetricReport {
        match self.aggregation {
            Aggregation::Pooled => {
                let (auc, _) = roc_auc_scores(&self.scores, &self.labels);
                MetricReport::from_counts(&self.counts, auc)
            }
            Aggregation::PerImage => {
                let mean = |get: fn(&MetricReport) -> Option<f64>| {
                    let vals: Vec<f64> = self.per_image.iter().filter_map(get).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                };
                MetricReport {
                    se: mean(|r| r.se),
                    sp: mean(|r| r.sp),
                    acc: mean(|r| r.acc),
                    auc: mean(|r| r.auc),
                    f1: mean(|r| r.f1),
                    mcc: mean(|r| r.mcc),
                }
            }
        }
    }
}
