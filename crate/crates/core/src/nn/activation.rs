use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const ELU_ALPHA: f64 = 1.0;

pub fn elu_forward<T: Scalar>(x: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let alpha = T::from_f64(alpha);
    x.map(|v| if v > T::zero() { v } else { alpha * v.exp_m1() })
}

/// Elementwise derivative of ELU evaluated at the pre-activation `x`.
pub fn elu_derivative<T: Scalar>(x: T, alpha: f64) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::from_f64(alpha) * x.exp()
    }
}

/// Exponential linear unit.
#[derive(Clone, Debug)]
pub struct Elu<T: Scalar> {
    pub alpha: f64,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Elu<T> {
    pub fn new(alpha: f64) -> Self {
        Elu { alpha, input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        elu_forward(x, self.alpha)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("elu backward before forward".into()))?;
        if x.shape() != upstream.shape() {
            return Err(Error::shape(format!(
                "elu upstream gradient {:?} for input {:?}",
                upstream.shape(),
                x.shape()
            )));
        }
        let data = x
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&v, &g)| g * elu_derivative(v, self.alpha))
            .collect();
        Tensor::new(x.shape(), data)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
