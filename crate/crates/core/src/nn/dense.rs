//! Fully connected layers. Weights are stored `(d_in, d_out)`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn dims(input: &[usize], weight: &[usize], bias: &[usize]) -> Result<(usize, usize, usize)> {
    let [n, d_in] = *input else {
        return Err(Error::shape(format!("dense input must be (N,d_in), got {input:?}")));
    };
    let [w_in, d_out] = *weight else {
        return Err(Error::shape(format!(
            "dense weight must be (d_in,d_out), got {weight:?}"
        )));
    };
    if w_in != d_in {
        return Err(Error::shape(format!(
            "dense input width {d_in} does not match weight rows {w_in}"
        )));
    }
    if bias != [d_out] {
        return Err(Error::shape(format!("dense bias must be ({d_out}), got {bias:?}")));
    }
    Ok((n, d_in, d_out))
}

pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in, d_out) = dims(input.shape(), weight.shape(), bias.shape())?;
    let mut out = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        false,
        false,
        n,
        d_in,
        d_out,
        input.data(),
        weight.data(),
        T::one(),
        &mut out,
    );
    Tensor::new(&[n, d_out], out)
}

/// Gradients `(input, weight, bias)` of an affine map.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let bias_shape = [weight.shape().get(1).copied().unwrap_or(0)];
    let (n, d_in, d_out) = dims(input.shape(), weight.shape(), &bias_shape)?;
    if upstream.shape() != [n, d_out] {
        return Err(Error::shape(format!(
            "dense upstream gradient {:?}, expected [{n}, {d_out}]",
            upstream.shape()
        )));
    }
    let mut dx = vec![T::zero(); n * d_in];
    T::gemm(
        false,
        true,
        n,
        d_out,
        d_in,
        upstream.data(),
        weight.data(),
        T::zero(),
        &mut dx,
    );
    let mut dw = vec![T::zero(); d_in * d_out];
    T::gemm(
        true,
        false,
        d_in,
        n,
        d_out,
        input.data(),
        upstream.data(),
        T::zero(),
        &mut dw,
    );
    let mut db = vec![T::zero(); d_out];
    for row in upstream.data().chunks_exact(d_out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    Ok((
        Tensor::new(&[n, d_in], dx)?,
        Tensor::new(&[d_in, d_out], dw)?,
        Tensor::new(&[d_out], db)?,
    ))
}

#[derive(Clone, Debug)]
pub struct Dense<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub weight_grad: Tensor<T>,
    pub bias_grad: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape(format!(
                "dense parameters {:?} / {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Dense {
            weight_grad: Tensor::zeros(weight.shape()),
            bias_grad: Tensor::zeros(bias.shape()),
            weight,
            bias,
            input: None,
        })
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = dense_forward(input, &self.weight, &self.bias)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward before forward".into()))?;
        let (dx, dw, db) = dense_backward(input, &self.weight, upstream)?;
        self.weight_grad = dw;
        self.bias_grad = db;
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

/// Row-major reshape `(N, C, H, W) -> (N, C*H*W)`.
pub fn flatten<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = *x
        .shape()
        .first()
        .ok_or_else(|| Error::shape("flatten of a rank-0 tensor"))?;
    let rest = x.len() / n;
    x.clone().reshape(&[n, rest])
}

#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        flatten(x)
    }

    pub fn backward<T: Scalar>(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward before forward".into()))?;
        upstream.clone().reshape(shape)
    }

    pub fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}
