use rand::seq::SliceRandom;
use rand::Rng;

use super::FundusSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform random train/validation split. Both halves keep the input order.
pub fn split_validation<T: Scalar, R: Rng + ?Sized>(
    samples: Vec<FundusSample<T>>,
    val_count: usize,
    rng: &mut R,
) -> Result<(Vec<FundusSample<T>>, Vec<FundusSample<T>>)> {
    if val_count == 0 || val_count >= samples.len() {
        return Err(Error::Config(format!(
            "validation count {val_count} must be in 1..{}",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut is_val = vec![false; samples.len()];
    for &i in &order[..val_count] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, v) in samples.into_iter().zip(is_val) {
        if v {
            val.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize) -> Vec<FundusSample<f32>> {
        (0..n)
            .map(|i| {
                FundusSample::new(
                    format!("s{i}"),
                    Tensor::zeros([3, 2, 2]).unwrap(),
                    Tensor::zeros([1, 2, 2]).unwrap(),
                    None,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn default_split_sizes() {
        for (val, train) in [(26, 230), (13, 243)] {
            let (t, v) = split_validation(set(256), val, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!((t.len(), v.len()), (train, val));
            let mut ids: Vec<_> = t.iter().chain(&v).map(|s| s.id.clone()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 256);
        }
    }

    #[test]
    fn seeded_split_repeats() {
        let ids = |seed| {
            let (_, v) = split_validation(set(40), 7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            v.into_iter().map(|s| s.id).collect::<Vec<_>>()
        };
        assert_eq!(ids(3), ids(3));
    }

    #[test]
    fn out_of_range_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(split_validation(set(5), 5, &mut rng).is_err());
        assert!(split_validation(set(5), 0, &mut rng).is_err());
    }
}
