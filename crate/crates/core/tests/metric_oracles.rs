use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saunet::metrics::{
    basic_metrics, confusion, mcc, roc_auc_scores, Aggregation, ConfusionCounts, MetricAccumulator,
};
use saunet::Tensor;

fn brute_mcc(pred: &[bool], gt: &[bool]) -> Option<f64> {
    let (mut tp, mut fp, mut fneg, mut tn) = (0f64, 0f64, 0f64, 0f64);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let denom = ((tp + fp) * (tp + fneg) * (tn + fp) * (tn + fneg)).sqrt();
    (denom > 0.0).then(|| (tp * tn - fp * fneg) / denom)
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn mask(bits: &[bool], h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_vec([1, 1, h, w], bits.iter().map(|&b| b as u8 as f64).collect()).unwrap()
}

#[test]
fn mcc_hand_case() {
    let c = ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 3 };
    assert!((mcc(&c).unwrap() - 5.0 / 12.0).abs() < 1e-15);
}

#[test]
fn mcc_agrees_with_pixel_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (h, w) = (rng.random_range(1..=128), rng.random_range(1..=128));
        let (pp, pg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred: Vec<bool> = (0..h * w).map(|_| rng.random_bool(pp)).collect();
        let gt: Vec<bool> = (0..h * w).map(|_| rng.random_bool(pg)).collect();
        let c = confusion(&mask(&pred, h, w), &mask(&gt, h, w), None).unwrap();
        match (mcc(&c), brute_mcc(&pred, &gt)) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12, "{a} vs {b}"),
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn auc_agrees_with_pairwise_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..500 {
        let n = rng.random_range(2..=if case % 50 == 0 { 10_000 } else { 600 });
        // coarse scores force plenty of ties
        let levels = rng.random_range(2..50);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| (rng.random_range(0..levels) as f64 + if l { 3.0 } else { 0.0 }) / (levels as f64 + 3.0))
            .collect();
        match (roc_auc_scores(&scores, &labels).0, brute_auc(&scores, &labels)) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12, "{a} vs {b}"),
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn pooled_accumulation_equals_single_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let probs: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
    let gt: Vec<f64> = (0..2 * 64).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
    let whole = |v: &[f64]| Tensor::from_vec([1, 1, 16, 8], v.to_vec()).unwrap();
    let half = |v: &[f64], k: usize| Tensor::from_vec([1, 1, 8, 8], v[k * 64..(k + 1) * 64].to_vec()).unwrap();
    let mut one = MetricAccumulator::new(0.5, Aggregation::Pooled).unwrap();
    one.add(&whole(&probs), &whole(&gt), None).unwrap();
    let mut two = MetricAccumulator::new(0.5, Aggregation::Pooled).unwrap();
    two.add(&half(&probs, 0), &half(&gt, 0), None).unwrap();
    two.add(&half(&probs, 1), &half(&gt, 1), None).unwrap();
    assert_eq!(one.finish(), two.finish());
}

#[test]
fn region_excludes_pixels() {
    let pred = Tensor::from_vec([1, 1, 1, 4], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    let gt = Tensor::from_vec([1, 1, 1, 4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let fov = Tensor::from_vec([1, 1, 1, 4], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let c = confusion(&pred, &gt, Some(&fov)).unwrap();
    assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 0, 0, 1));
}

proptest! {
    #[test]
    fn metrics_stay_in_range(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..400)) {
        let (pred, gt): (Vec<bool>, Vec<bool>) = bits.into_iter().unzip();
        let n = pred.len();
        let c = confusion(&mask(&pred, 1, n), &mask(&gt, 1, n), None).unwrap();
        prop_assert_eq!(c.total(), n as u64);
        let b = basic_metrics(&c);
        for v in [b.se, b.sp, b.acc, b.f1].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let Some(m) = mcc(&c) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m));
        }
    }

    #[test]
    fn swapping_classes_mirrors_auc(scores in proptest::collection::vec(0u8..20, 2..200), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        if let (Some(a), Some(b)) = (roc_auc_scores(&s, &labels).0, roc_auc_scores(&s, &flipped).0) {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
