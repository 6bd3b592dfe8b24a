//! From raw frames to model-ready volumes.

mod ingest;
mod preprocess;
mod synthetic;
mod volumes;

pub use ingest::{ingest, read_labels, write_frames, write_labels, Ingested};
pub use preprocess::{fit_stats, preprocess, preprocess_with, resize_bilinear, PreprocessConfig, PreprocessStats};
pub use synthetic::{generate_synthetic, AnomalyKind, AnomalyWindow, SyntheticSpec, SyntheticVideo};
pub use volumes::{build_volumes, StrideSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered frames of one video, each `[C, H, W]` with raw intensities in `[0, 255]`
/// (or standardized values once preprocessed).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence<S> {
    pub frames: Vec<Tensor<S>>,
    pub fps: f64,
    pub source_id: String,
}

impl<S: Scalar> FrameSequence<S> {
    pub const DEFAULT_FPS: f64 = 25.0;

    pub fn new(frames: Vec<Tensor<S>>, source_id: impl Into<String>) -> Result<Self> {
        let seq = FrameSequence {
            frames,
            fps: Self::DEFAULT_FPS,
            source_id: source_id.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `[C, H, W]` of the first frame.
    pub fn frame_shape(&self) -> Option<&[usize]> {
        self.frames.first().map(|f| f.shape())
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.frames.first() else {
            return Ok(());
        };
        if first.shape().len() != 3 {
            return Err(Error::Input(format!(
                "{}: frames must be [C, H, W], got {:?}",
                self.source_id,
                first.shape()
            )));
        }
        for (k, f) in self.frames.iter().enumerate() {
            if f.shape() != first.shape() {
                return Err(Error::Input(format!(
                    "{}: frame {} is {:?} but frame 1 is {:?}",
                    self.source_id,
                    k + 1,
                    f.shape(),
                    first.shape()
                )));
            }
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("{} frame {}", self.source_id, k + 1)));
            }
        }
        Ok(())
    }
}
