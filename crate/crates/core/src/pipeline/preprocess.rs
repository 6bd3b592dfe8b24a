use serde::{Deserialize, Serialize};

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Side of the square frames after resizing.
    pub target_size: usize,
    /// Raw intensity that maps to 1.0.
    pub max_intensity: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 227,
            max_intensity: 255.0,
        }
    }
}

/// Training-set statistics reused verbatim at test time.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessStats<S> {
    /// Per-location, per-channel mean of the resized, scaled training frames, `[C, H, W]`.
    pub mean_image: Tensor<S>,
    /// Global mean of the grayscale mean-subtracted training pixels.
    pub mean: S,
    /// Global (population) variance of the same pixels.
    pub variance: S,
}

const MIN_VARIANCE: f64 = 1e-20;

/// Bilinear resampling with half-pixel centers; same-size input is returned unchanged.
pub fn resize_bilinear<S: Scalar>(frame: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    let &[c, h, w] = frame.shape() else {
        return Err(Error::shape("resize", format!("expected [C, H, W], got {:?}", frame.shape())));
    };
    if (h, w) == (out_h, out_w) {
        return Ok(frame.clone());
    }
    // Source coordinate and blend weight along one axis.
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let src = frame.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            let fy = S::of(fy);
            for &(x0, x1, fx) in &xs {
                let fx = S::of(fx);
                let top = plane[y0 * w + x0] * (S::one() - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (S::one() - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (S::one() - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Resize then scale to `[0, 1]`.
fn resize_and_scale<S: Scalar>(frame: &Tensor<S>, cfg: &PreprocessConfig) -> Result<Tensor<S>> {
    let inv = S::of(1.0 / cfg.max_intensity);
    Ok(resize_bilinear(frame, cfg.target_size, cfg.target_size)?.map(|v| v * inv))
}

/// Subtract the mean image, then average channels to grayscale.
fn centre_and_gray<S: Scalar>(scaled: &Tensor<S>, mean_image: &Tensor<S>) -> Result<Tensor<S>> {
    let centred = scaled.sub(mean_image)?;
    let (c, h, w) = (centred.shape()[0], centred.shape()[1], centred.shape()[2]);
    if c == 1 {
        return Ok(centred);
    }
    let inv = S::of(1.0 / c as f64);
    let d = centred.data();
    Ok(Tensor::from_fn(&[1, h, w], |k| {
        (0..c).map(|ch| d[ch * h * w + k]).sum::<S>() * inv
    }))
}

/// Computes mean image and standardization moments over every frame of
/// every training sequence.
pub fn fit_stats<S: Scalar>(training: &[&FrameSequence<S>], cfg: &PreprocessConfig) -> Result<PreprocessStats<S>> {
    let total: usize = training.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::Input("no training frames to compute statistics from".into()));
    }
    let channels = training
        .iter()
        .find_map(|s| s.frame_shape())
        .map(|s| s[0])
        .expect("non-empty");
    let n = cfg.target_size;
    let mut scaled = Vec::with_capacity(total);
    for seq in training {
        seq.validate()?;
        for f in &seq.frames {
            if f.shape()[0] != channels {
                return Err(Error::Input(format!(
                    "{}: frames with {} channels mixed with {channels}-channel frames",
                    seq.source_id,
                    f.shape()[0]
                )));
            }
            scaled.push(resize_and_scale(f, cfg)?);
        }
    }
    let mut mean_image = Tensor::zeros(&[channels, n, n]);
    for f in &scaled {
        mean_image.add_assign(f)?;
    }
    let mean_image = mean_image.scale(S::of(1.0 / total as f64));

    let gray = scaled
        .iter()
        .map(|f| centre_and_gray(f, &mean_image))
        .collect::<Result<Vec<_>>>()?;
    let count = S::of((total * n * n) as f64);
    let mean = gray.iter().map(|g| g.sum()).sum::<S>() / count;
    let variance = gray
        .iter()
        .map(|g| g.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<S>())
        .sum::<S>()
        / count;
    if !(variance.as_f64() > MIN_VARIANCE) {
        return Err(Error::Input(format!(
            "training frames have zero variance after mean subtraction (variance {variance}); \
             a constant video cannot be standardized"
        )));
    }
    Ok(PreprocessStats {
        mean_image,
        mean,
        variance,
    })
}

/// Applies resize, scaling, mean-image subtraction, grayscale and
/// standardization with fixed statistics.
pub fn preprocess_with<S: Scalar>(
    raw: &FrameSequence<S>,
    stats: &PreprocessStats<S>,
    cfg: &PreprocessConfig,
) -> Result<FrameSequence<S>> {
    if raw.is_empty() {
        return Err(Error::Input(format!("{}: empty frame sequence", raw.source_id)));
    }
    raw.validate()?;
    let n = cfg.target_size;
    let channels = raw.frames[0].shape()[0];
    stats
        .mean_image
        .expect_shape(&[channels, n, n], "preprocess mean image")?;
    let inv_std = S::one() / stats.variance.sqrt();
    let frames = raw
        .frames
        .iter()
        .map(|f| {
            let g = centre_and_gray(&resize_and_scale(f, cfg)?, &stats.mean_image)?;
            Ok(g.map(|v| (v - stats.mean) * inv_std))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSequence {
        frames,
        fps: raw.fps,
        source_id: raw.source_id.clone(),
    })
}

/// Training call (`stats = None`) fits statistics on `raw`; test calls reuse them.
pub fn preprocess<S: Scalar>(
    raw: &FrameSequence<S>,
    stats: Option<&PreprocessStats<S>>,
    cfg: &PreprocessConfig,
) -> Result<(FrameSequence<S>, PreprocessStats<S>)> {
    if raw.is_empty() {
        return Err(Error::Input(format!("{}: empty frame sequence", raw.source_id)));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => fit_stats(&[raw], cfg)?,
    };
    let out = preprocess_with(raw, &stats, cfg)?;
    Ok((out, stats))
}
