//! Central-difference gradient checks for layers and whole models.

use serde::Serialize;

use super::mse_loss;
use crate::error::Result;
use crate::nn::{Layer, Mode, Model};
use crate::tensor::{Rng, Tensor};

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_relative_error = self.max_relative_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }
}

/// Eval-mode MSE of the model on a fixed batch.
fn model_loss(model: &mut Model<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> Result<f64> {
    let pred = model.forward(input)?;
    Ok(mse_loss(&pred, target)?.0)
}

fn pick(len: usize, samples: Option<usize>, rng: &mut Rng) -> Vec<usize> {
    match samples {
        Some(k) if k < len => (0..k).map(|_| rng.below(len)).collect(),
        _ => (0..len).collect(),
    }
}

/// Compares analytic and central-difference gradients for every parameter of
/// `model`. Dropout is disabled for the duration of the check.
pub fn grad_check(model: &mut Model<f64>, input: &Tensor<f64>, target: &Tensor<f64>, step: f64) -> Result<f64> {
    Ok(grad_check_sampled(model, input, target, step, None, &mut Rng::new(0))?.max_relative_error)
}

/// As [`grad_check`], but with at most `samples` randomly chosen entries per
/// parameter tensor.
pub fn grad_check_sampled(
    model: &mut Model<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    step: f64,
    samples: Option<usize>,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let saved_mode = model.mode();
    model.set_mode(Mode::Eval);
    let result = (|| {
        let pred = model.forward(input)?;
        let (_, grad) = mse_loss(&pred, target)?;
        model.backward(&grad)?;
        let analytic: Vec<Tensor<f64>> = model.grads().into_iter().cloned().collect();

        let mut report = GradCheckReport::default();
        for (p, analytic) in analytic.iter().enumerate() {
            for i in pick(analytic.len(), samples, rng) {
                let original = model.params()[p].data()[i];
                model.params_mut()[p].data_mut()[i] = original + step;
                let plus = model_loss(model, input, target)?;
                model.params_mut()[p].data_mut()[i] = original - step;
                let minus = model_loss(model, input, target)?;
                model.params_mut()[p].data_mut()[i] = original;
                report.record(analytic.data()[i], (plus - minus) / (2.0 * step));
            }
        }
        Ok(report)
    })();
    model.set_mode(saved_mode);
    result
}

/// Checks one layer's input and parameter gradients under an MSE loss against
/// a random target. Dropout layers are checked in eval mode.
pub fn check_layer(layer: &mut Layer<f64>, input: &Tensor<f64>, step: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let mut fwd_rng = Rng::new(0);
    let out = layer.forward(input, Mode::Eval, &mut fwd_rng)?;
    let target = crate::tensor::uniform_init(out.shape(), -1.0, 1.0, rng)?;
    let (_, grad) = mse_loss(&out, &target)?;
    let dx = layer.backward(&grad)?;
    let param_grads: Vec<Tensor<f64>> = layer.grads().into_iter().cloned().collect();

    let mut loss_at = |layer: &mut Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = layer.forward(x, Mode::Eval, &mut fwd_rng)?;
        Ok(mse_loss(&y, &target)?.0)
    };

    let mut report = GradCheckReport::default();
    let mut x = input.clone();
    for i in 0..x.len() {
        let original = x.data()[i];
        x.data_mut()[i] = original + step;
        let plus = loss_at(layer, &x)?;
        x.data_mut()[i] = original - step;
        let minus = loss_at(layer, &x)?;
        x.data_mut()[i] = original;
        report.record(dx.data()[i], (plus - minus) / (2.0 * step));
    }
    for (p, analytic) in param_grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let original = layer.params()[p].data()[i];
            layer.params_mut()[p].data_mut()[i] = original + step;
            let plus = loss_at(layer, &x)?;
            layer.params_mut()[p].data_mut()[i] = original - step;
            let minus = loss_at(layer, &x)?;
            layer.params_mut()[p].data_mut()[i] = original;
            report.record(analytic.data()[i], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}
