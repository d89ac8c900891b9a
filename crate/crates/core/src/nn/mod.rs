//! Layers with hand-written forward and backward passes, and the NaimishNet
//! model built from them.

mod activation;
mod conv;
mod dense;
mod dropout;
mod model;
mod pool;

pub use activation::{elu_derivative, elu_forward, Elu, ELU_ALPHA};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d};
pub use dense::{dense_backward, dense_forward, flatten, Dense, Flatten};
pub use dropout::{dropout_forward, Dropout, Mode};
pub use model::{build_naimishnet, subscript_name, LayerRow, Model, NetConfig, TABLE_I};
pub use pool::{maxpool2d_backward, maxpool2d_forward, pooled_shape, MaxPool2d};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    MaxPool2d,
    Elu,
    Linear,
    Dropout,
    Flatten,
    Dense,
}

#[derive(Clone, Debug)]
pub enum Layer<T: Scalar> {
    Conv2d(Conv2d<T>),
    MaxPool2d(MaxPool2d),
    Elu(Elu<T>),
    /// Identity activation.
    Linear,
    Dropout(Dropout<T>),
    Flatten(Flatten),
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2d,
            Layer::Elu(_) => LayerKind::Elu,
            Layer::Linear => LayerKind::Linear,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Flatten(_) => LayerKind::Flatten,
            Layer::Dense(_) => LayerKind::Dense,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Elu(l) => Ok(l.forward(x)),
            Layer::Linear => Ok(x.clone()),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(upstream),
            Layer::MaxPool2d(l) => l.backward(upstream),
            Layer::Elu(l) => l.backward(upstream),
            Layer::Linear => Ok(upstream.clone()),
            Layer::Dropout(l) => l.backward(upstream),
            Layer::Flatten(l) => l.backward(upstream),
            Layer::Dense(l) => l.backward(upstream),
        }
    }

    /// Output shape for a given input shape, without touching any data.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(l) => l.output_shape(input),
            Layer::MaxPool2d(_) => Ok(pooled_shape(input)?.to_vec()),
            Layer::Elu(_) | Layer::Linear | Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => match input {
                [n, rest @ ..] if !rest.is_empty() => Ok(vec![*n, rest.iter().product()]),
                _ => Err(Error::shape(format!("cannot flatten {input:?}"))),
            },
            Layer::Dense(l) => match input {
                [n, d] if *d == l.weight.shape()[0] => Ok(vec![*n, l.units()]),
                _ => Err(Error::shape(format!(
                    "dense layer expects (N,{}), got {input:?}",
                    l.weight.shape()[0]
                ))),
            },
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight_grad, &l.bias_grad],
            Layer::Dense(l) => vec![&l.weight_grad, &l.bias_grad],
            _ => Vec::new(),
        }
    }

    pub fn grads_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight_grad, &mut l.bias_grad],
            Layer::Dense(l) => vec![&mut l.weight_grad, &mut l.bias_grad],
            _ => Vec::new(),
        }
    }

    /// Parameters paired with their gradient buffers.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2d(l) => vec![(&mut l.weight, &l.weight_grad), (&mut l.bias, &l.bias_grad)],
            Layer::Dense(l) => vec![(&mut l.weight, &l.weight_grad), (&mut l.bias, &l.bias_grad)],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.clear_cache(),
            Layer::MaxPool2d(l) => l.clear_cache(),
            Layer::Elu(l) => l.clear_cache(),
            Layer::Linear => {}
            Layer::Dropout(l) => l.clear_cache(),
            Layer::Flatten(l) => l.clear_cache(),
            Layer::Dense(l) => l.clear_cache(),
        }
    }
}
