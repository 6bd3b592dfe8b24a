//! Dense row-major tensors plus the convolution and activation kernels the
//! autoencoder is built from. Every forward kernel has a matching backward.

mod activation;
mod conv;
pub mod init;

pub use activation::Activation;
pub use conv::{conv2d, conv2d_backward, deconv2d, deconv2d_backward, ConvGrads, ConvSpec};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strided read-only matrix: `(data, row_stride, col_stride)`.
pub type MatRef<'a, S> = (&'a [S], usize, usize);

/// `c = a b + beta c` where `a` is `m x k`, `b` is `k x n` and `c` is a
/// contiguous row-major `m x n` buffer.
///
/// Panics if a view is too short for the requested dimensions.
pub fn gemm<S: Scalar>(m: usize, k: usize, n: usize, a: MatRef<'_, S>, b: MatRef<'_, S>, c: &mut [S], beta: S) {
    assert_eq!(c.len(), m * n, "gemm output buffer");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let fits = |(d, rs, cs): MatRef<'_, S>, r: usize, q: usize| (r - 1) * rs + (q - 1) * cs < d.len();
    assert!(fits(a, m, k) && fits(b, k, n), "gemm operand too short");
    // SAFETY: the largest strided offset of each operand was checked above and
    // `c` holds exactly `m * n` contiguous elements.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(
                "Tensor::new",
                format!("dimensions must be positive, got {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!(
                    "shape {shape:?} holds {expected} values but {} were given",
                    data.len()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Panics on a zero dimension; use [`Tensor::new`] for untrusted shapes.
    pub fn full(shape: &[usize], value: S) -> Self {
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "tensor dimensions must be positive: {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        t
    }

    pub fn scalar_vec(values: &[S]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<S> {
        self.expect_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    /// Sub-tensor at index `i` of the leading axis.
    pub fn slice0(&self, i: usize) -> Tensor<S> {
        assert!(self.shape.len() >= 2, "slice0 needs rank >= 2");
        assert!(i < self.shape[0], "index {i} out of range {}", self.shape[0]);
        let inner: usize = self.shape[1..].iter().product();
        Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor<S>]) -> Result<Tensor<S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("stack", "nothing to stack"))?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            first.expect_same_shape(p, "stack")?;
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Concatenates `[C_k, ...]` tensors along the leading (channel) axis.
    pub fn concat0(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat0", "nothing to concatenate"))?;
        let tail = &first.shape[1..];
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::shape(
                    "concat0",
                    format!("trailing dims {:?} vs {:?}", &p.shape[1..], tail),
                ));
            }
            channels += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![channels];
        shape.extend_from_slice(tail);
        Ok(Tensor { shape, data })
    }

    /// Inverse of [`Tensor::concat0`]: splits the leading axis into chunks.
    pub fn split0(&self, sizes: &[usize]) -> Result<Vec<Tensor<S>>> {
        if sizes.iter().sum::<usize>() != self.shape[0] {
            return Err(Error::shape(
                "split0",
                format!("chunks {sizes:?} do not cover leading dim {}", self.shape[0]),
            ));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut offset = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &c in sizes {
            let mut shape = vec![c];
            shape.extend_from_slice(&self.shape[1..]);
            out.push(Tensor::new(
                shape,
                self.data[offset * inner..(offset + c) * inner].to_vec(),
            )?);
            offset += c;
        }
        Ok(out)
    }

    pub fn expect_shape(&self, shape: &[usize], op: &'static str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(
                op,
                format!("expected {shape:?}, got {:?}", self.shape),
            ));
        }
        Ok(())
    }

    fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        self.expect_shape(&other.shape, op)
    }
}
