//! Binary container: magic, format version, a JSON header describing the
//! configuration and every tensor, then the raw little-endian tensor data in
//! header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autoencoder::SpatioTemporalAE;
use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::pipeline::{PreprocessConfig, PreprocessStats};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"STAECKPT";
const VERSION: u32 = 1;
const STATS_MEAN_IMAGE: &str = "stats.mean_image";
const STATS_MOMENTS: &str = "stats.moments";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    seed: u64,
    config: ModelConfig,
    preprocess: Option<PreprocessConfig>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// A model plus, once trained, the preprocessing it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub model: SpatioTemporalAE<S>,
    pub preprocess: Option<(PreprocessConfig, PreprocessStats<S>)>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(model: SpatioTemporalAE<S>) -> Self {
        Checkpoint { model, preprocess: None }
    }

    pub fn with_stats(model: SpatioTemporalAE<S>, cfg: PreprocessConfig, stats: PreprocessStats<S>) -> Self {
        Checkpoint {
            model,
            preprocess: Some((cfg, stats)),
        }
    }

    pub fn stats(&self) -> Option<&PreprocessStats<S>> {
        self.preprocess.as_ref().map(|(_, s)| s)
    }

    fn all_tensors(&self) -> Vec<(String, Tensor<S>)> {
        let mut out: Vec<(String, Tensor<S>)> = self
            .model
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        if let Some((_, s)) = &self.preprocess {
            out.push((STATS_MEAN_IMAGE.into(), s.mean_image.clone()));
            out.push((STATS_MOMENTS.into(), Tensor::scalar_vec(&[s.mean, s.variance])));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.all_tensors();
        let header = Header {
            dtype: S::DTYPE.into(),
            seed: self.model.config().seed,
            config: self.model.config().clone(),
            preprocess: self.preprocess.as_ref().map(|(c, _)| c.clone()),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| err(format!("header encoding: {e}")))?;
        let payload: usize = tensors.iter().map(|(_, t)| t.len() * S::BYTES).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(err("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(err(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(err("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| err(format!("malformed header: {e}")))?;
        if header.dtype != S::DTYPE {
            return Err(err(format!("stored as {} but loaded as {}", header.dtype, S::DTYPE)));
        }
        if header.seed != header.config.seed {
            return Err(err("header seed disagrees with the model configuration"));
        }

        let mut data = &body[hlen..];
        let mut stored: Vec<(String, Tensor<S>)> = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let need = n * S::BYTES;
            if data.len() < need {
                return Err(err(format!("truncated data for {}", entry.name)));
            }
            let values = data[..need].chunks_exact(S::BYTES).map(S::read_le).collect();
            data = &data[need..];
            stored.push((entry.name, Tensor::new(entry.shape, values)?));
        }
        if !data.is_empty() {
            return Err(err(format!("{} trailing bytes", data.len())));
        }

        let mut model = SpatioTemporalAE::<S>::build(header.config)?;
        let names: Vec<(String, Vec<usize>)> = model
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let mut stored = stored.into_iter();
        for ((name, shape), dst) in names.iter().zip(model.tensors_mut()) {
            let (sname, t) = stored
                .next()
                .ok_or_else(|| err(format!("missing tensor {name}")))?;
            if &sname != name || t.shape() != shape.as_slice() {
                return Err(err(format!(
                    "expected {name} {shape:?}, found {sname} {:?}",
                    t.shape()
                )));
            }
            *dst = t;
        }

        let rest: Vec<(String, Tensor<S>)> = stored.collect();
        let preprocess = match (header.preprocess, rest.as_slice()) {
            (None, []) => None,
            (Some(cfg), [(a, mean_image), (b, moments)])
                if a == STATS_MEAN_IMAGE && b == STATS_MOMENTS && moments.len() == 2 =>
            {
                let stats = PreprocessStats {
                    mean_image: mean_image.clone(),
                    mean: moments.data()[0],
                    variance: moments.data()[1],
                };
                Some((cfg, stats))
            }
            _ => return Err(err("preprocessing statistics are inconsistent with the header")),
        };
        Ok(Checkpoint { model, preprocess })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perturbed_tiny() -> SpatioTemporalAE<f64> {
        let mut m = SpatioTemporalAE::<f64>::build(ModelConfig::tiny()).unwrap();
        for (k, t) in m.tensors_mut().into_iter().enumerate() {
            t.data_mut().iter_mut().for_each(|v| *v += 1e-3 * k as f64);
        }
        m
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let stats = PreprocessStats {
            mean_image: Tensor::from_fn(&[1, 16, 16], |i| i as f64 / 3.0),
            mean: -0.125,
            variance: 0.3,
        };
        let ck = Checkpoint::with_stats(perturbed_tiny(), PreprocessConfig::default(), stats);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn file_round_trip_without_stats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let ck = Checkpoint::new(perturbed_tiny());
        ck.save(&p).unwrap();
        let back = Checkpoint::<f64>::load(&p).unwrap();
        assert_eq!(back, ck);
        assert!(back.stats().is_none());
    }

    #[test]
    fn rejects_corruption_and_wrong_dtype() {
        let bytes = Checkpoint::new(perturbed_tiny()).to_bytes().unwrap();
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::<f64>::from_bytes(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
    }

    #[test]
    fn f32_round_trip() {
        let m = SpatioTemporalAE::<f32>::build(ModelConfig::tiny()).unwrap();
        let bytes = Checkpoint::new(m).to_bytes().unwrap();
        assert_eq!(Checkpoint::<f32>::from_bytes(&bytes).unwrap().to_bytes().unwrap(), bytes);
    }
}
