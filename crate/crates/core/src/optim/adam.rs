use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::{Module, ParamVisitorMut};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-7;

/// First and second moment estimates of one trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T: Scalar> {
    pub name: String,
    pub first: Vec<T>,
    pub second: Vec<T>,
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// One entry per trainable tensor, created on the first step.
    pub moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Updates `params` in place from `grads` (same order and shapes).
    ///
    /// Non-finite gradients abort the step before anything is modified.
    pub fn apply(&mut self, names: &[&str], params: &mut [Vec<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() || names.len() != params.len() {
            return Err(Error::invalid("parameter and gradient lists differ in length"));
        }
        for ((name, p), g) in names.iter().zip(params.iter()).zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape(format!("{name}: gradient length mismatch")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of {name}"),
                });
            }
        }
        if self.moments.is_empty() {
            self.moments = names
                .iter()
                .zip(params.iter())
                .map(|(name, p)| Moments {
                    name: name.to_string(),
                    first: vec![T::zero(); p.len()],
                    second: vec![T::zero(); p.len()],
                })
                .collect();
        }
        if self.moments.len() != params.len()
            || self
                .moments
                .iter()
                .zip(names.iter().zip(params.iter()))
                .any(|(m, (n, p))| m.name != *n || m.first.len() != p.len())
        {
            return Err(Error::invalid("optimizer state does not match the parameters"));
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_m_b1, one_m_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            for i in 0..p.len() {
                let m = b1 * mom.first[i] + one_m_b1 * g[i];
                let v = b2 * mom.second[i] + one_m_b2 * g[i] * g[i];
                mom.first[i] = m;
                mom.second[i] = v;
                let m_hat = m / c1;
                let v_hat = v / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One Adam update of every trainable tensor of `net` from its accumulated
/// gradients (missing gradients count as zero). Clears the gradients.
pub fn adam_step<T: Scalar>(net: &mut Network<T>, state: &mut AdamState<T>) -> Result<()> {
    let trainable = net.trainable_parameters();
    let names: Vec<&str> = trainable.iter().map(|(n, _)| n.as_str()).collect();
    let mut values: Vec<Vec<T>> = trainable.iter().map(|(_, t)| t.to_vec()).collect();
    let grads: Vec<Vec<T>> = trainable
        .iter()
        .map(|(_, t)| t.grad().map_or_else(|| vec![T::zero(); t.numel()], |g| g.to_vec()))
        .collect();
    state.apply(&names, &mut values, &grads)?;

    let mut updated = values.into_iter();
    let mut err = None;
    let mut visitor = |_: &str, t: &mut Tensor<T>, trainable: bool| {
        if !trainable {
            return;
        }
        let data = updated.next().expect("one value per trainable tensor");
        match Tensor::from_vec(t.shape(), data) {
            Ok(new) => *t = new.requires_grad(),
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    };
    net.visit_params_mut("", &mut visitor as &mut dyn ParamVisitorMut<T>);
    err.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_still_counts_a_step() {
        let mut st = AdamState::<f64>::new(0.001);
        let mut p = vec![vec![1.0, -2.0]];
        st.apply(&["w"], &mut p, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p[0], vec![1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_unit_gradient() {
        let mut st = AdamState::<f64>::new(0.001);
        let mut p = vec![vec![0.0]];
        st.apply(&["w"], &mut p, &[vec![1.0]]).unwrap();
        // m_hat = v_hat = 1, so the update is lr / (1 + eps).
        let expected = -0.001 / (1.0 + 1e-7);
        assert!((p[0][0] - expected).abs() < 1e-18);
        assert!((p[0][0] + 0.000_999_999).abs() < 1e-9);
    }

    #[test]
    fn opposite_gradients_move_symmetrically() {
        let mut st = AdamState::<f64>::new(0.01);
        // start at zero so the parameters hold the raw updates
        let mut p = vec![vec![0.0, 0.0]];
        st.apply(&["w"], &mut p, &[vec![0.3, -0.3]]).unwrap();
        assert!(p[0][0] < 0.0);
        assert_eq!(p[0][0], -p[0][1]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_change() {
        let mut st = AdamState::<f32>::new(0.01);
        let mut p = vec![vec![1.0f32]];
        let err = st.apply(&["w"], &mut p, &[vec![f32::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p[0], vec![1.0]);
        assert_eq!(st.step, 0);
    }
}
