use serde::{Deserialize, Serialize};

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::model::VideoVolume;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Temporal strides used to cut a sequence into volumes of `time_steps` frames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrideSet {
    pub strides: Vec<usize>,
    pub time_steps: usize,
}

impl Default for StrideSet {
    fn default() -> Self {
        StrideSet {
            strides: vec![1, 2, 3],
            time_steps: 10,
        }
    }
}

impl StrideSet {
    /// Dense stride-1 windows, used at test time.
    pub fn dense(time_steps: usize) -> Self {
        StrideSet {
            strides: vec![1],
            time_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() || self.time_steps == 0 {
            return Err(Error::Config("stride set needs at least one stride and T >= 1".into()));
        }
        if self.strides.contains(&0) {
            return Err(Error::Config(format!("strides must be positive: {:?}", self.strides)));
        }
        let mut sorted = self.strides.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.strides.len() {
            return Err(Error::Config(format!("strides must be distinct: {:?}", self.strides)));
        }
        Ok(())
    }

    /// Volumes a sequence of `n` frames yields: `sum_s max(0, n - (T-1)s)`.
    pub fn volume_count(&self, n: usize) -> usize {
        self.strides
            .iter()
            .map(|&s| n.saturating_sub((self.time_steps - 1) * s))
            .sum()
    }
}

/// Every volume `{i, i+s, ..., i+(T-1)s}` (1-based) that fits, stride by stride.
pub fn build_volumes<S: Scalar>(frames: &FrameSequence<S>, strides: &StrideSet) -> Result<Vec<VideoVolume<S>>> {
    strides.validate()?;
    let n = frames.len();
    let t = strides.time_steps;
    if n < t {
        return Err(Error::Input(format!(
            "{}: {n} frames are too few for a {t}-frame volume",
            frames.source_id
        )));
    }
    let mut out = Vec::with_capacity(strides.volume_count(n));
    for &s in &strides.strides {
        let span = (t - 1) * s;
        for start in 1..=n.saturating_sub(span) {
            let idx: Vec<usize> = (0..t).map(|k| start + k * s).collect();
            let stacked = Tensor::stack(&idx.iter().map(|&i| frames.frames[i - 1].clone()).collect::<Vec<_>>())?;
            out.push(VideoVolume::new(stacked, idx)?);
        }
    }
    Ok(out)
}
