//! Valid (unpadded), stride-1 2-D cross-correlation lowered to GEMM via im2col.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeometry {
    fn check(input: &[usize], weight: &[usize], bias: &[usize]) -> Result<Self> {
        let [batch, channels, height, width] = *input else {
            return Err(Error::shape(format!("conv2d input must be (N,C,H,W), got {input:?}")));
        };
        let [filters, wc, kh, kw] = *weight else {
            return Err(Error::shape(format!(
                "conv2d weight must be (F,C,kh,kw), got {weight:?}"
            )));
        };
        if wc != channels {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {channels}, weight expects {wc}"
            )));
        }
        if kh > height || kw > width {
            return Err(Error::shape(format!(
                "conv2d kernel ({kh},{kw}) larger than input ({height},{width})"
            )));
        }
        if bias != [filters] {
            return Err(Error::shape(format!("conv2d bias must be ({filters}), got {bias:?}")));
        }
        Ok(ConvGeometry {
            batch,
            channels,
            height,
            width,
            filters,
            kh,
            kw,
        })
    }

    fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }

    fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.filters, self.out_h(), self.out_w()]
    }
}

/// Unrolls one (C,H,W) image into a (C*kh*kw, Ho*Wo) matrix.
fn im2col<T: Scalar>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = g.height * g.width;
    let mut row = 0;
    for c in 0..g.channels {
        let src = &image[c * plane..(c + 1) * plane];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let s = (oy + ki) * g.width + kj;
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(&src[s..s + ow]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds a column matrix back onto an image.
fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = g.height * g.width;
    let mut row = 0;
    for c in 0..g.channels {
        let dst = &mut image[c * plane..(c + 1) * plane];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let d = (oy + ki) * g.width + kj;
                    for (o, &v) in dst[d..d + ow].iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                        *o = *o + v;
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let g = ConvGeometry::check(input.shape(), weight.shape(), bias.shape())?;
    let spatial = g.out_h() * g.out_w();
    let mut out = vec![T::zero(); g.batch * g.filters * spatial];
    let mut cols = vec![T::zero(); g.patch_len() * spatial];
    let image_len = g.channels * g.height * g.width;
    for (n, image) in input.data().chunks_exact(image_len).enumerate() {
        im2col(&g, image, &mut cols);
        let dst = &mut out[n * g.filters * spatial..(n + 1) * g.filters * spatial];
        for (plane, &b) in dst.chunks_exact_mut(spatial).zip(bias.data()) {
            plane.fill(b);
        }
        T::gemm(
            false,
            false,
            g.filters,
            g.patch_len(),
            spatial,
            weight.data(),
            &cols,
            T::one(),
            dst,
        );
    }
    Tensor::new(&g.out_shape(), out)
}

/// Gradients of a conv2d with respect to `(input, weight, bias)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let bias_shape = [weight.shape()[0]];
    let g = ConvGeometry::check(input.shape(), weight.shape(), &bias_shape)?;
    if upstream.shape() != g.out_shape() {
        return Err(Error::shape(format!(
            "conv2d upstream gradient {:?}, expected {:?}",
            upstream.shape(),
            g.out_shape()
        )));
    }
    let spatial = g.out_h() * g.out_w();
    let patch = g.patch_len();
    let image_len = g.channels * g.height * g.width;
    let mut dx = vec![T::zero(); input.len()];
    let mut dw = vec![T::zero(); weight.len()];
    let mut db = vec![T::zero(); g.filters];
    let mut cols = vec![T::zero(); patch * spatial];
    let mut dcols = vec![T::zero(); patch * spatial];
    for n in 0..g.batch {
        let image = &input.data()[n * image_len..(n + 1) * image_len];
        let dy = &upstream.data()[n * g.filters * spatial..(n + 1) * g.filters * spatial];
        for (acc, plane) in db.iter_mut().zip(dy.chunks_exact(spatial)) {
            *acc = plane.iter().fold(*acc, |s, &v| s + v);
        }
        im2col(&g, image, &mut cols);
        T::gemm(false, true, g.filters, spatial, patch, dy, &cols, T::one(), &mut dw);
        T::gemm(
            true,
            false,
            patch,
            g.filters,
            spatial,
            weight.data(),
            dy,
            T::zero(),
            &mut dcols,
        );
        col2im(&g, &dcols, &mut dx[n * image_len..(n + 1) * image_len]);
    }
    Ok((
        Tensor::new(input.shape(), dx)?,
        Tensor::new(weight.shape(), dw)?,
        Tensor::new(&bias_shape, db)?,
    ))
}

#[derive(Clone, Debug)]
pub struct Conv2d<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub weight_grad: Tensor<T>,
    pub bias_grad: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(format!(
                "conv2d parameters {:?} / {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Conv2d {
            weight_grad: Tensor::zeros(weight.shape()),
            bias_grad: Tensor::zeros(bias.shape()),
            weight,
            bias,
            input: None,
        })
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(ConvGeometry::check(input, self.weight.shape(), self.bias.shape())?
            .out_shape()
            .to_vec())
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = conv2d_forward(input, &self.weight, &self.bias)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward before forward".into()))?;
        let (dx, dw, db) = conv2d_backward(input, &self.weight, upstream)?;
        self.weight_grad = dw;
        self.bias_grad = db;
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
