use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpatioTemporalAE;
use crate::pipeline::{build_volumes, FrameSequence, StrideSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything mapping a `[T, C, H, W]` volume to a same-shaped reconstruction.
pub trait Reconstructor<S>: Sync {
    fn time_steps(&self) -> usize;

    fn reconstruct(&self, input: &Tensor<S>) -> Result<Tensor<S>>;
}

impl<S: Scalar> Reconstructor<S> for SpatioTemporalAE<S> {
    fn time_steps(&self) -> usize {
        SpatioTemporalAE::time_steps(self)
    }

    fn reconstruct(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        SpatioTemporalAE::reconstruct(self, input)
    }
}

/// Euclidean reconstruction error of every frame of a preprocessed sequence.
///
/// All stride-1 windows are reconstructed; a frame's error is the mean of its
/// per-window errors over the windows that contain it.
pub fn frame_errors<S: Scalar, R: Reconstructor<S>>(model: &R, frames: &FrameSequence<S>) -> Result<Vec<f64>> {
    let t_len = model.time_steps();
    let volumes = build_volumes(frames, &StrideSet::dense(t_len))?;
    let per_window = volumes
        .par_iter()
        .map(|v| {
            let recon = model.reconstruct(&v.frames)?;
            v.frames.expect_shape(recon.shape(), "reconstruction")?;
            let diff = recon.sub(&v.frames)?;
            Ok((0..t_len).map(|t| diff.slice0(t).sum_sq().as_f64().sqrt()).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let n = frames.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (start, errs) in per_window.iter().enumerate() {
        for (t, e) in errs.iter().enumerate() {
            sums[start + t] += e;
            counts[start + t] += 1;
        }
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// `(e - e_min) / e_max`
    #[default]
    AsWritten,
    /// `(e - e_min) / (e_max - e_min)`
    MinMax,
}

/// Per-frame error, abnormality and regularity of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularitySeries {
    pub frame_indices: Vec<usize>,
    pub e: Vec<f64>,
    pub s_a: Vec<f64>,
    pub s_r: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RegularitySeries {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

/// Scores for frames numbered `1..=e.len()`.
pub fn regularity(e: &[f64], mode: NormalizationMode) -> Result<RegularitySeries> {
    regularity_indexed(e, (1..=e.len()).collect(), mode)
}

pub fn regularity_indexed(e: &[f64], frame_indices: Vec<usize>, mode: NormalizationMode) -> Result<RegularitySeries> {
    if e.is_empty() {
        return Err(Error::Input("empty error series".into()));
    }
    if frame_indices.len() != e.len() {
        return Err(Error::Input(format!(
            "{} frame indices for {} errors",
            frame_indices.len(),
            e.len()
        )));
    }
    if let Some(k) = e.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input(format!(
            "reconstruction error at frame {} is {}",
            frame_indices[k], e[k]
        )));
    }
    let e_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let e_max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = match mode {
        NormalizationMode::AsWritten => e_max,
        NormalizationMode::MinMax => e_max - e_min,
    };
    let mut warnings = Vec::new();
    let s_a: Vec<f64> = if denom > 0.0 {
        e.iter().map(|v| (v - e_min) / denom).collect()
    } else {
        let msg = if e_max == 0.0 {
            "all reconstruction errors are zero; abnormality set to 0".to_string()
        } else {
            format!("constant reconstruction error {e_max}; abnormality set to 0")
        };
        log::warn!("{msg}");
        warnings.push(msg);
        vec![0.0; e.len()]
    };
    let s_r = s_a.iter().map(|a| 1.0 - a).collect();
    Ok(RegularitySeries {
        frame_indices,
        e: e.to_vec(),
        s_a,
        s_r,
        warnings,
    })
}
