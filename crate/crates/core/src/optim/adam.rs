use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
///
/// Moment buffers are allocated on the first step, one per parameter tensor,
/// in the order the parameters are passed.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    pub fn step(&mut self, params: Vec<(&mut Tensor<T>, &Tensor<T>)>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape(format!(
                    "adam parameter {:?}, gradient {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let c1 = T::from_f64(1.0 / (1.0 - beta1.powi(t)));
        let c2 = T::from_f64(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(epsilon));

        for ((p, g), (m, v)) in params.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let moments = m.data_mut().iter_mut().zip(v.data_mut());
            for ((w, &g), (m, v)) in p.data_mut().iter_mut().zip(g.data()).zip(moments) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m * c1;
                let v_hat = *v * c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step<T: Scalar>(adam: &mut Adam<T>, w: &mut Tensor<T>, g: f64) {
        let g = Tensor::full(&[1], T::from_f64(g));
        adam.step(vec![(w, &g)]).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut w = Tensor::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let g = Tensor::zeros(&[3]);
        adam.step(vec![(&mut w, &g)]).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_two_steps_are_lr() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut w = Tensor::zeros(&[1]);
        scalar_step(&mut adam, &mut w, 1.0);
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((w.data()[0] - expected).abs() < 1e-12);
        scalar_step(&mut adam, &mut w, 1.0);
        assert!((w.data()[0] + 0.002).abs() < 1e-9);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn first_step_magnitude_for_any_constant_gradient() {
        for g in [1e-3, 0.5, 1.0, -3.0, 250.0] {
            let mut adam = Adam::<f64>::new(AdamConfig::default());
            let mut w = Tensor::zeros(&[1]);
            scalar_step(&mut adam, &mut w, g);
            let expected = 0.001 * g.abs() / (g.abs() + 1e-8);
            assert!((w.data()[0].abs() - expected).abs() < 1e-12, "g={g}");
            assert_eq!(w.data()[0].signum(), -g.signum());
        }
    }

    #[test]
    fn single_precision_first_steps() {
        let mut adam = Adam::<f32>::new(AdamConfig::default());
        let mut w = Tensor::zeros(&[1]);
        let mut prev = 0.0f32;
        for _ in 0..2 {
            scalar_step(&mut adam, &mut w, 1.0);
            let delta = (w.data()[0] - prev).abs() as f64;
            assert!((delta - 0.001).abs() < 1e-6);
            prev = w.data()[0];
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // f(w) = (w - 1)^2, started at 0
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut w = Tensor::zeros(&[1]);
        for _ in 0..5000 {
            let g = 2.0 * (w.data()[0] - 1.0);
            scalar_step(&mut adam, &mut w, g);
        }
        assert!((w.data()[0] - 1.0).abs() < 1e-3, "w = {}", w.data()[0]);
    }

    #[test]
    fn moments_follow_parameter_shapes() {
        let mut adam = Adam::<f32>::new(AdamConfig::default());
        let mut a = Tensor::zeros(&[2, 3]);
        let mut b = Tensor::zeros(&[4]);
        let (ga, gb) = (Tensor::full(&[2, 3], 1.0), Tensor::full(&[4], 1.0));
        adam.step(vec![(&mut a, &ga), (&mut b, &gb)]).unwrap();
        assert_eq!(adam.first_moments()[0].shape(), &[2, 3]);
        assert_eq!(adam.second_moments()[1].shape(), &[4]);
        let bad = Tensor::full(&[5], 1.0);
        assert!(adam.step(vec![(&mut a, &ga), (&mut b, &bad)]).is_err());
    }
}
