use serde::{Deserialize, Serialize};

use super::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of a square-kernel 2D convolution.
///
/// For a deconvolution the channel fields describe the deconvolution itself:
/// `in_channels` is what it consumes, `out_channels` what it produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
        }
    }

    /// Stride 1 with `(m - 1) / 2` zero padding; spatial size is preserved for odd `m`.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::new(in_channels, out_channels, kernel, 1, kernel / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!(
                "kernel, stride and channel counts must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `floor((n + 2p - m) / s) + 1`
    pub fn output_size(&self, n: usize) -> Result<usize> {
        let padded = n + 2 * self.padding;
        if self.kernel > padded {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "kernel {} exceeds padded input {} (n={}, pad={})",
                    self.kernel, padded, n, self.padding
                ),
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// `(n - 1) s + m - 2p`
    pub fn transposed_output_size(&self, n: usize) -> Result<usize> {
        let full = (n - 1) * self.stride + self.kernel;
        if n == 0 || full <= 2 * self.padding {
            return Err(Error::shape(
                "deconv2d",
                format!("input {n} with {self:?} leaves no output"),
            ));
        }
        Ok(full - 2 * self.padding)
    }

    fn filter_len(&self) -> usize {
        self.kernel * self.kernel
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<S> {
    pub input: Tensor<S>,
    pub filters: Tensor<S>,
    pub bias: Tensor<S>,
}

fn dims3<S: Scalar>(t: &Tensor<S>, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::shape(op, format!("expected [C, H, W], got {s:?}"))),
    }
}

fn expect_filters<S: Scalar>(f: &Tensor<S>, lead: usize, second: usize, m: usize, op: &'static str) -> Result<()> {
    f.expect_shape(&[lead, second, m, m], op)
}

/// Input coordinate of kernel tap `k` for output coordinate `o`, if inside the image.
#[inline]
fn source(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
    (o * stride + k).checked_sub(pad).filter(|&i| i < n)
}

/// Unrolls `x [C, H, W]` into `[C*m*m, OH*OW]`: row `(a, ky, kx)` holds the
/// input value under that tap for every output position (zero in the padding).
fn im2col<S: Scalar>(
    x: &[S],
    (ca, h, w): (usize, usize, usize),
    m: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<S> {
    let p = oh * ow;
    let mut cols = vec![S::zero(); ca * m * m * p];
    for a in 0..ca {
        let xa = &x[a * h * w..(a + 1) * h * w];
        for ky in 0..m {
            for kx in 0..m {
                let row = &mut cols[((a * m + ky) * m + kx) * p..][..p];
                for oy in 0..oh {
                    let Some(iy) = source(oy, ky, stride, pad, h) else { continue };
                    let xrow = &xa[iy * w..(iy + 1) * w];
                    for ox in 0..ow {
                        if let Some(ix) = source(ox, kx, stride, pad, w) {
                            row[oy * ow + ox] = xrow[ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: adds every column entry back onto its input pixel.
fn col2im<S: Scalar>(
    cols: &[S],
    (ca, h, w): (usize, usize, usize),
    m: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<S> {
    let p = oh * ow;
    let mut x = vec![S::zero(); ca * h * w];
    for a in 0..ca {
        let xa = &mut x[a * h * w..(a + 1) * h * w];
        for ky in 0..m {
            for kx in 0..m {
                let row = &cols[((a * m + ky) * m + kx) * p..][..p];
                for oy in 0..oh {
                    let Some(iy) = source(oy, ky, stride, pad, h) else { continue };
                    let xrow = &mut xa[iy * w..(iy + 1) * w];
                    for ox in 0..ow {
                        if let Some(ix) = source(ox, kx, stride, pad, w) {
                            xrow[ix] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Gather: `out[b, oy, ox] = sum_{a,ky,kx} k[b, a, ky, kx] x[a, oy*s+ky-p, ox*s+kx-p]`.
#[allow(clippy::too_many_arguments)]
fn correlate<S: Scalar>(
    x: &[S],
    dims: (usize, usize, usize),
    k: &[S],
    cb: usize,
    m: usize,
    stride: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Vec<S> {
    let r = dims.0 * m * m;
    let p = out_hw.0 * out_hw.1;
    let cols = im2col(x, dims, m, stride, pad, out_hw);
    let mut out = vec![S::zero(); cb * p];
    gemm(cb, r, p, (k, r, 1), (&cols, p, 1), &mut out, S::zero());
    out
}

/// Adjoint of [`correlate`]: `out[a, ...] += k[b, a, ky, kx] g[b, oy, ox]`.
#[allow(clippy::too_many_arguments)]
fn scatter<S: Scalar>(
    g: &[S],
    (cb, oh, ow): (usize, usize, usize),
    k: &[S],
    ca: usize,
    m: usize,
    stride: usize,
    pad: usize,
    (h, w): (usize, usize),
) -> Vec<S> {
    let r = ca * m * m;
    let p = oh * ow;
    let mut cols = vec![S::zero(); r * p];
    gemm(r, cb, p, (k, 1, r), (g, p, 1), &mut cols, S::zero());
    col2im(&cols, (ca, h, w), m, stride, pad, (oh, ow))
}

/// `dk[b, a, ky, kx] = sum_{oy,ox} g[b, oy, ox] x[a, oy*s+ky-p, ox*s+kx-p]`.
fn filter_grad<S: Scalar>(
    x: &[S],
    dims: (usize, usize, usize),
    g: &[S],
    (cb, oh, ow): (usize, usize, usize),
    m: usize,
    stride: usize,
    pad: usize,
) -> Vec<S> {
    let r = dims.0 * m * m;
    let p = oh * ow;
    let cols = im2col(x, dims, m, stride, pad, (oh, ow));
    let mut dk = vec![S::zero(); cb * r];
    gemm(cb, p, r, (g, p, 1), (&cols, 1, p), &mut dk, S::zero());
    dk
}

fn channel_sums<S: Scalar>(g: &[S], c: usize, plane: usize) -> Vec<S> {
    (0..c).map(|i| g[i * plane..(i + 1) * plane].iter().copied().sum()).collect()
}

fn add_bias<S: Scalar>(out: &mut [S], bias: &[S], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        out[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

/// 2D cross-correlation of `input [C_in, H, W]` with `filters [C_out, C_in, m, m]`.
pub fn conv2d<S: Scalar>(input: &Tensor<S>, filters: &Tensor<S>, bias: &Tensor<S>, spec: &ConvSpec) -> Result<Tensor<S>> {
    spec.validate()?;
    let (ci, h, w) = dims3(input, "conv2d")?;
    if ci != spec.in_channels {
        return Err(Error::shape(
            "conv2d",
            format!("input has {ci} channels, spec expects {}", spec.in_channels),
        ));
    }
    let m = spec.kernel;
    expect_filters(filters, spec.out_channels, ci, m, "conv2d filters")?;
    bias.expect_shape(&[spec.out_channels], "conv2d bias")?;
    let (oh, ow) = (spec.output_size(h)?, spec.output_size(w)?);
    let mut out = correlate(
        input.data(),
        (ci, h, w),
        filters.data(),
        spec.out_channels,
        m,
        spec.stride,
        spec.padding,
        (oh, ow),
    );
    add_bias(&mut out, bias.data(), oh * ow);
    Tensor::new(vec![spec.out_channels, oh, ow], out)
}

pub fn conv2d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    saved_input: &Tensor<S>,
    filters: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<ConvGrads<S>> {
    spec.validate()?;
    let (ci, h, w) = dims3(saved_input, "conv2d_backward")?;
    let m = spec.kernel;
    expect_filters(filters, spec.out_channels, ci, m, "conv2d_backward filters")?;
    let (oh, ow) = (spec.output_size(h)?, spec.output_size(w)?);
    grad_out.expect_shape(&[spec.out_channels, oh, ow], "conv2d_backward grad_out")?;
    let co = spec.out_channels;
    let gi = scatter(grad_out.data(), (co, oh, ow), filters.data(), ci, m, spec.stride, spec.padding, (h, w));
    let gf = filter_grad(saved_input.data(), (ci, h, w), grad_out.data(), (co, oh, ow), m, spec.stride, spec.padding);
    Ok(ConvGrads {
        input: Tensor::new(vec![ci, h, w], gi)?,
        filters: Tensor::new(vec![co, ci, m, m], gf)?,
        bias: Tensor::new(vec![co], channel_sums(grad_out.data(), co, oh * ow))?,
    })
}

/// Transposed convolution with `filters [C_in, C_out, m, m]`; the adjoint of
/// [`conv2d`] when the same filter tensor is used and bias is zero.
pub fn deconv2d<S: Scalar>(input: &Tensor<S>, filters: &Tensor<S>, bias: &Tensor<S>, spec: &ConvSpec) -> Result<Tensor<S>> {
    spec.validate()?;
    let (ci, h, w) = dims3(input, "deconv2d")?;
    if ci != spec.in_channels {
        return Err(Error::shape(
            "deconv2d",
            format!("input has {ci} channels, spec expects {}", spec.in_channels),
        ));
    }
    let m = spec.kernel;
    let co = spec.out_channels;
    expect_filters(filters, ci, co, m, "deconv2d filters")?;
    bias.expect_shape(&[co], "deconv2d bias")?;
    let (oh, ow) = (spec.transposed_output_size(h)?, spec.transposed_output_size(w)?);
    let mut out = scatter(input.data(), (ci, h, w), filters.data(), co, m, spec.stride, spec.padding, (oh, ow));
    add_bias(&mut out, bias.data(), oh * ow);
    Tensor::new(vec![co, oh, ow], out)
}

pub fn deconv2d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    saved_input: &Tensor<S>,
    filters: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<ConvGrads<S>> {
    spec.validate()?;
    let (ci, h, w) = dims3(saved_input, "deconv2d_backward")?;
    let m = spec.kernel;
    let co = spec.out_channels;
    expect_filters(filters, ci, co, m, "deconv2d_backward filters")?;
    let (oh, ow) = (spec.transposed_output_size(h)?, spec.transposed_output_size(w)?);
    grad_out.expect_shape(&[co, oh, ow], "deconv2d_backward grad_out")?;
    let gi = correlate(grad_out.data(), (co, oh, ow), filters.data(), ci, m, spec.stride, spec.padding, (h, w));
    let gf = filter_grad(grad_out.data(), (co, oh, ow), saved_input.data(), (ci, h, w), m, spec.stride, spec.padding);
    debug_assert_eq!(gf.len(), ci * co * spec.filter_len());
    Ok(ConvGrads {
        input: Tensor::new(vec![ci, h, w], gi)?,
        filters: Tensor::new(vec![ci, co, m, m], gf)?,
        bias: Tensor::new(vec![co], channel_sums(grad_out.data(), co, oh * ow))?,
    })
}
