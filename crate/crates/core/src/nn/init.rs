use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Normal(0, std) truncated at two standard deviations.
pub(crate) fn truncated_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, count: usize, std: f64) -> Vec<T> {
    (0..count)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break T::lit(z * std);
            }
        })
        .collect()
}

/// He initialisation for weights feeding a ReLU.
pub(crate) fn he_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, count: usize, fan_in: usize) -> Vec<T> {
    truncated_normal(rng, count, (2.0 / fan_in.max(1) as f64).sqrt())
}

pub(crate) fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    fan_in: usize,
    fan_out: usize,
) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..count)
        .map(|_| T::lit(rng.random_range(-limit..limit)))
        .collect()
}
