use super::{join, Module, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    ops::{batch_norm_train, channel_affine},
    Tensor,
};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-3;

/// Per-channel batch normalization. `gamma`/`beta` are trained; the moving
/// statistics are updated during training passes and used for evaluation.
#[derive(Clone, Debug)]
pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub moving_mean: Tensor<T>,
    pub moving_var: Tensor<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Tensor::<T>::ones([channels])?.requires_grad(),
            beta: Tensor::<T>::zeros([channels])?.requires_grad(),
            moving_mean: Tensor::zeros([channels])?,
            moving_var: Tensor::ones([channels])?,
            momentum: T::lit(BN_MOMENTUM),
            eps: T::lit(BN_EPS),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, _, _) = x.nchw()?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batch norm over {} channels given input with {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and folds them into the moving averages.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let (out, mean, var) = batch_norm_train(x, &self.gamma, &self.beta, self.eps)?;
        let m = self.momentum;
        let blend = |moving: &Tensor<T>, batch: &[T]| -> Result<Tensor<T>> {
            let data = moving
                .data()
                .iter()
                .zip(batch)
                .map(|(&old, &new)| m * old + (T::one() - m) * new)
                .collect();
            Tensor::from_vec(moving.shape(), data)
        };
        self.moving_mean = blend(&self.moving_mean, &mean)?;
        self.moving_var = blend(&self.moving_var, &var)?;
        Ok(out)
    }

    /// Normalizes with the moving statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        channel_affine(
            x,
            &self.gamma,
            &self.beta,
            self.moving_mean.data(),
            self.moving_var.data(),
            self.eps,
        )
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn visit_params(&self, prefix: &str, v: &mut dyn ParamVisitor<T>) {
        v.visit(&join(prefix, "gamma"), &self.gamma, true);
        v.visit(&join(prefix, "beta"), &self.beta, true);
        v.visit(&join(prefix, "moving_mean"), &self.moving_mean, false);
        v.visit(&join(prefix, "moving_var"), &self.moving_var, false);
    }

    fn visit_params_mut(&mut self, prefix: &str, v: &mut dyn ParamVisitorMut<T>) {
        v.visit(&join(prefix, "gamma"), &mut self.gamma, true);
        v.visit(&join(prefix, "beta"), &mut self.beta, true);
        v.visit(&join(prefix, "moving_mean"), &mut self.moving_mean, false);
        v.visit(&join(prefix, "moving_var"), &mut self.moving_var, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, mul, sum};

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            })
            .collect()
    }

    #[test]
    fn constant_channels_map_to_beta() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        bn.beta = Tensor::from_vec([2], vec![0.25, -1.5]).unwrap();
        let mut data = vec![3.0; 8];
        data[4..].fill(-7.0);
        let x = Tensor::from_vec([1, 2, 2, 2], data).unwrap();
        let y = bn.forward_train(&x).unwrap();
        assert!(y.data()[..4].iter().all(|&v| v == 0.25));
        assert!(y.data()[4..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn train_output_is_standardized() {
        let mut bn = BatchNorm::<f64>::new(3).unwrap();
        let x = Tensor::from_vec([4, 3, 5, 5], pseudo_random(300, 7)).unwrap();
        let y = bn.forward_train(&x).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|i| y.data()[(i * 3 + ch) * 25..(i * 3 + ch + 1) * 25].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            // Variance is v_batch / (v_batch + eps); undo the eps shrinkage.
            let xs: Vec<f64> = (0..4)
                .flat_map(|i| x.data()[(i * 3 + ch) * 25..(i * 3 + ch + 1) * 25].to_vec())
                .collect();
            let xm = xs.iter().sum::<f64>() / 100.0;
            let xv = xs.iter().map(|a| (a - xm) * (a - xm)).sum::<f64>() / 100.0;
            assert!(m.abs() < 1e-5);
            assert!((v * (xv + BN_EPS) / xv - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn moving_stats_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        let x = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        bn.forward_train(&x).unwrap();
        assert!((bn.moving_mean.data()[0] - 0.01 * 2.0).abs() < 1e-15);
        assert!((bn.moving_var.data()[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn frozen_stats_reproduce_train_output() {
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        bn.gamma = Tensor::from_vec([2], vec![1.3, 0.7]).unwrap().requires_grad();
        let x = Tensor::from_vec([2, 2, 3, 3], pseudo_random(36, 1)).unwrap();
        let mut probe = bn.clone();
        probe.momentum = 0.0;
        let train = probe.forward_train(&x).unwrap();
        let eval = probe.forward_eval(&x).unwrap();
        for (a, b) in train.data().iter().zip(eval.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let bn = BatchNorm::<f32>::new(4).unwrap();
        let x = Tensor::<f32>::ones([1, 3, 2, 2]).unwrap();
        assert!(bn.forward_eval(&x).is_err());
    }

    #[test]
    fn train_gradient_matches_finite_differences() {
        let x = Tensor::from_vec([2, 3, 4, 4], pseudo_random(96, 11)).unwrap();
        let g = Tensor::from_vec([3], vec![1.2, 0.8, -0.5]).unwrap();
        let b = Tensor::from_vec([3], vec![0.1, -0.2, 0.3]).unwrap();
        let w = Tensor::from_vec([2, 3, 4, 4], pseudo_random(96, 5)).unwrap();
        let f = |a: &[Tensor<f64>]| {
            let (y, _, _) = batch_norm_train(&a[0], &a[1], &a[2], BN_EPS)?;
            Ok(sum(&mul(&y, &w)?))
        };
        let r = grad_check(f, &[x, g, b], 1e-4).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
