use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar, Tensor};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")))
    }
}

/// Inverted dropout. Returns the output and the multiplicative mask that was
/// applied (`None` when the layer acted as the identity).
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    check_probability(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.next_f64() < p { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, Some(mask)))
}

#[derive(Clone, Debug)]
pub struct Dropout<T: Scalar> {
    pub p: f64,
    cache: Option<(Vec<usize>, Option<Vec<T>>)>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Dropout { p, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        let (out, mask) = dropout_forward(x, self.p, mode, rng)?;
        self.cache = Some((x.shape().to_vec(), mask));
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, mask) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dropout backward before forward".into()))?;
        if upstream.shape() != shape.as_slice() {
            return Err(Error::shape(format!(
                "dropout upstream gradient {:?} for input {shape:?}",
                upstream.shape()
            )));
        }
        match mask {
            None => Ok(upstream.clone()),
            Some(mask) => {
                let data = upstream.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Tensor::new(shape, data)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
