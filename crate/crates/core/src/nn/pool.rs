//! 2x2 max pooling with non-overlapping windows.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn pooled_shape(input: &[usize]) -> Result<[usize; 4]> {
    let [n, c, h, w] = *input else {
        return Err(Error::shape(format!("maxpool input must be (N,C,H,W), got {input:?}")));
    };
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("maxpool needs spatial dims >= 2, got ({h},{w})")));
    }
    Ok([n, c, h / 2, w / 2])
}

/// Pools `input` and returns the output together with the flat input offset
/// that won each window. Ties go to the first maximum in row-major order; a
/// trailing odd row or column is dropped.
pub fn maxpool2d_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let out_shape = pooled_shape(input.shape())?;
    let [n, c, oh, ow] = out_shape;
    let (h, w) = (input.shape()[2], input.shape()[3]);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let k = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[k] > x[best] {
                        best = k;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&out_shape, out)?, argmax))
}

pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if upstream.shape() != pooled_shape(input_shape)? {
        return Err(Error::shape(format!(
            "maxpool upstream gradient {:?} for input {input_shape:?}",
            upstream.shape()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&k, &g) in argmax.iter().zip(upstream.data()) {
        d[k] = d[k] + g;
    }
    Ok(dx)
}

#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = maxpool2d_forward(input)?;
        self.cache = Some((input.shape().to_vec(), argmax));
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, argmax) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("maxpool backward before forward".into()))?;
        maxpool2d_backward(shape, argmax, upstream)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
