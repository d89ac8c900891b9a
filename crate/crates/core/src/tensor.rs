//! Shaped row-major arrays, the splitmix64 generator, and weight initializers.

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type of a [`Tensor`]. Implemented for `f32` (the default) and
/// `f64` (used for finite-difference gradient checks).
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a' * b' + beta * c` where `a'` is `m x k`, `b'` is `k x n` and the
    /// primes denote an optional transpose of the stored row-major operand.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

/// Row and column strides of a stored row-major matrix seen through an
/// optional transpose. `rows x cols` is the logical (post-transpose) shape.
fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: lhs too short");
                assert!(b.len() >= k * n, "gemm: rhs too short");
                assert!(c.len() >= m * n, "gemm: output too short");
                let (rsa, csa) = strides(trans_a, m, k);
                let (rsb, csb) = strides(trans_b, k, n);
                // SAFETY: the asserts above guarantee every strided access of the
                // m x k, k x n and m x n views stays inside the slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

/// A dense, row-major array of real numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in shape {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::shape(format!(
                "index rank {} for tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::shape(format!(
                    "index {index:?} out of bounds for {:?}",
                    self.shape
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    /// Inverse of [`Tensor::offset`].
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for (slot, &d) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % d;
            flat /= d;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs().as_f64()))
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Self> {
        let outer = self.shape.first().copied().unwrap_or(0);
        if start >= end || end > outer {
            return Err(Error::shape(format!("outer slice {start}..{end} of extent {outer}")));
        }
        let inner = self.data.len() / outer;
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Tensor {
            shape,
            data: self.data[start * inner..end * inner].to_vec(),
        })
    }
}

/// splitmix64 pseudo-random generator.
///
/// Fixed so that draws are reproducible across implementations. Floats are
/// built from the top 53 bits of each output; bounded integers use the
/// multiply-shift reduction `(x * n) >> 64`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer on `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle(&mut order);
        order
    }

    /// A new generator whose stream is decorrelated from this one.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// Uniform on `[lo, hi)` in the target precision; draws that round up to
    /// `hi` are redrawn.
    pub fn uniform<T: Scalar>(&mut self, lo: f64, hi: f64) -> T {
        if lo == hi {
            return T::from_f64(lo);
        }
        let hi_t = T::from_f64(hi);
        loop {
            let v = T::from_f64(lo + (hi - lo) * self.next_f64());
            if v < hi_t {
                return v;
            }
        }
    }
}

pub fn uniform_init<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Tensor<T>> {
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("uniform range [{lo}, {hi}) is empty")));
    }
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform::<T>(lo, hi)).collect();
    Tensor::new(shape, data)
}

/// Half-width of the Glorot uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_uniform_init<T: Scalar>(
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!(
            "glorot fans must be positive, got ({fan_in}, {fan_out})"
        )));
    }
    let limit = glorot_limit(fan_in, fan_out);
    uniform_init(shape, -limit, limit, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn splitmix_reference_stream() {
        // Reference outputs of splitmix64 seeded with 0.
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn degenerate_uniform_is_constant() {
        let t: Tensor<f32> = uniform_init(&[2, 2], 0.0, 0.0, &mut Rng::new(1)).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_rejects_inverted_range() {
        assert!(uniform_init::<f32>(&[3], 1.0, -1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn uniform_stays_in_half_open_range() {
        let mut rng = Rng::new(7);
        for _ in 0..10 {
            let t: Tensor<f32> = uniform_init(&[1000], -0.05, 0.05, &mut rng).unwrap();
            assert!(t.data().iter().all(|&v| (-0.05..0.05).contains(&v)));
        }
    }

    #[test]
    fn same_seed_same_tensor() {
        let a: Tensor<f32> = uniform_init(&[4, 5], -1.0, 1.0, &mut Rng::new(99)).unwrap();
        let b: Tensor<f32> = uniform_init(&[4, 5], -1.0, 1.0, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
        let c: Tensor<f64> = glorot_uniform_init(3, 4, &[3, 4], &mut Rng::new(5)).unwrap();
        let d: Tensor<f64> = glorot_uniform_init(3, 4, &[3, 4], &mut Rng::new(5)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn glorot_limits() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        assert!((glorot_limit(6400, 1000) - 0.028475).abs() < 1e-6);
        assert!((glorot_limit(1000, 2) - 0.077382).abs() < 1e-6);
        assert!(glorot_uniform_init::<f32>(0, 3, &[3], &mut Rng::new(0)).is_err());
    }

    #[test]
    fn gemm_handles_transposes() {
        // a = [[1,2,3],[4,5,6]] (2x3), b = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        f64::gemm(false, false, 2, 3, 2, &a, &b, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T (3x2) * a (2x3) -> 3x3
        let mut g = [0.0f64; 9];
        f64::gemm(true, false, 3, 2, 3, &a, &a, 0.0, &mut g);
        assert_eq!(g, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a (2x3) * a^T (3x2) -> 2x2, accumulated onto ones
        let mut h = [1.0f64; 4];
        f64::gemm(false, true, 2, 3, 2, &a, &a, 1.0, &mut h);
        assert_eq!(h, [15.0, 33.0, 33.0, 78.0]);
    }

    proptest! {
        #[test]
        fn offset_round_trips(a in 1usize..6, b in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
            let t = Tensor::<f32>::zeros(&[a, b, c]);
            let mut rng = Rng::new(seed);
            let (i, j, k) = (rng.below(a), rng.below(b), rng.below(c));
            let flat = t.offset(&[i, j, k]).unwrap();
            prop_assert_eq!(flat, i * b * c + j * c + k);
            prop_assert_eq!(t.unravel(flat), vec![i, j, k]);
        }

        #[test]
        fn glorot_bound_holds(fan_in in 1usize..2000, fan_out in 1usize..2000, seed in any::<u64>()) {
            let t: Tensor<f32> = glorot_uniform_init(fan_in, fan_out, &[64], &mut Rng::new(seed)).unwrap();
            let limit = glorot_limit(fan_in, fan_out);
            prop_assert!(t.max_abs() <= limit);
        }

        #[test]
        fn below_is_in_range(n in 1usize..1000, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            for _ in 0..32 {
                prop_assert!(rng.below(n) < n);
            }
        }
    }
}
