//! Loss, optimizer and finite-difference gradient checking.

mod adam;
mod gradcheck;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{
    check_layer, grad_check, grad_check_sampled, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean squared error over every entry of `pred`, with its gradient.
///
/// The loss is accumulated in `f64`; the gradient is `2 (pred - target) / len`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let scale = T::from_f64(2.0 / n);
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{uniform_init, Rng};

    #[test]
    fn equal_inputs_have_zero_loss() {
        let x = Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let (loss, grad) = mse_loss::<f32>(&x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn hand_value() {
        let p = Tensor::from_f64(&[1, 2], &[1.0, 1.0]).unwrap();
        let t = Tensor::zeros(&[1, 2]);
        let (loss, grad) = mse_loss::<f64>(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(mse_loss::<f32>(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 1])).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(31);
        let p: Tensor<f64> = uniform_init(&[4, 2], -1.0, 1.0, &mut rng).unwrap();
        let t: Tensor<f64> = uniform_init(&[4, 2], -1.0, 1.0, &mut rng).unwrap();
        let (_, grad) = mse_loss(&p, &t).unwrap();
        let h = 1e-5;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.data_mut()[i] += h;
            let mut minus = p.clone();
            minus.data_mut()[i] -= h;
            let numeric = (mse_loss(&plus, &t).unwrap().0 - mse_loss(&minus, &t).unwrap().0) / (2.0 * h);
            assert!((numeric - grad.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_is_non_negative() {
        let mut rng = Rng::new(32);
        for _ in 0..50 {
            let p: Tensor<f64> = uniform_init(&[3, 2], -5.0, 5.0, &mut rng).unwrap();
            let t: Tensor<f64> = uniform_init(&[3, 2], -5.0, 5.0, &mut rng).unwrap();
            assert!(mse_loss(&p, &t).unwrap().0 > 0.0);
        }
    }
}
