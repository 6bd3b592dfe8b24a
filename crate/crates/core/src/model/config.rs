use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrent::{ConvLstmSpec, Peephole};
use crate::tensor::{Activation, ConvSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerConfig {
    /// Output channels of the layer.
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalLayerConfig {
    pub filters: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub peephole: Peephole,
}

fn one() -> usize {
    1
}

/// Layer layout of the autoencoder.
///
/// The defaults reconstruct the published architecture from its layer counts
/// and the 227-pixel input: two strided convolutions (227 → 55 → 26), three
/// 3×3 ConvLSTM layers and two mirrored deconvolutions (26 → 55 → 227).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub time_steps: usize,
    pub encoder: Vec<ConvLayerConfig>,
    pub temporal: Vec<TemporalLayerConfig>,
    pub decoder: Vec<ConvLayerConfig>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let conv = |filters, kernel, stride| ConvLayerConfig {
            filters,
            kernel,
            stride,
            padding: 0,
        };
        let lstm = |filters| TemporalLayerConfig {
            filters,
            kernel: 3,
            stride: 1,
            peephole: Peephole::Concat,
        };
        ModelConfig {
            input_size: 227,
            input_channels: 1,
            time_steps: 10,
            encoder: vec![conv(128, 11, 4), conv(64, 5, 2)],
            temporal: vec![lstm(64), lstm(32), lstm(64)],
            decoder: vec![conv(128, 5, 2), conv(1, 11, 4)],
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// 16×16 frames, three time steps, four filters per layer: 16 → 7 → 3 → 7 → 16.
    pub fn tiny() -> Self {
        let conv = |filters, kernel| ConvLayerConfig {
            filters,
            kernel,
            stride: 2,
            padding: 0,
        };
        let lstm = TemporalLayerConfig {
            filters: 4,
            kernel: 3,
            stride: 1,
            peephole: Peephole::Concat,
        };
        ModelConfig {
            input_size: 16,
            input_channels: 1,
            time_steps: 3,
            encoder: vec![conv(4, 4), conv(4, 3)],
            temporal: vec![lstm; 3],
            decoder: vec![conv(4, 3), conv(1, 4)],
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    /// Desk-scale counterpart of [`ModelConfig::tiny`]: 32×32 frames, ten time
    /// steps, eight filters per layer: 32 → 15 → 7 → 15 → 32.
    pub fn desk() -> Self {
        let mut cfg = Self::tiny();
        cfg.input_size = 32;
        cfg.time_steps = 10;
        for l in cfg.encoder.iter_mut().chain(&mut cfg.decoder) {
            l.filters = 8;
        }
        cfg.decoder[1].filters = 1;
        for l in &mut cfg.temporal {
            l.filters = 8;
        }
        cfg
    }

    pub fn encoder_specs(&self) -> Vec<ConvSpec> {
        let mut cin = self.input_channels;
        self.encoder
            .iter()
            .map(|l| {
                let s = ConvSpec::new(cin, l.filters, l.kernel, l.stride, l.padding);
                cin = l.filters;
                s
            })
            .collect()
    }

    pub fn temporal_specs(&self) -> Vec<ConvLstmSpec> {
        let mut cin = self.encoder.last().map_or(self.input_channels, |l| l.filters);
        self.temporal
            .iter()
            .map(|l| {
                let mut s = ConvLstmSpec::new(cin, l.filters, l.kernel, l.peephole);
                s.stride = l.stride;
                cin = l.filters;
                s
            })
            .collect()
    }

    pub fn decoder_specs(&self) -> Vec<ConvSpec> {
        let mut cin = self
            .temporal
            .last()
            .map(|l| l.filters)
            .or(self.encoder.last().map(|l| l.filters))
            .unwrap_or(self.input_channels);
        self.decoder
            .iter()
            .map(|l| {
                let s = ConvSpec::new(cin, l.filters, l.kernel, l.stride, l.padding);
                cin = l.filters;
                s
            })
            .collect()
    }

    /// Checks every structural invariant and returns the layer-by-layer size
    /// trace. On failure the error carries the trace up to the offending layer.
    pub fn size_trace(&self) -> Result<SizeTrace> {
        let mut trace = SizeTrace::default();
        let fail = |trace: &SizeTrace, msg: String| Err(Error::Config(format!("{msg}\n{trace}")));

        if self.input_size == 0 || self.input_channels == 0 || self.time_steps == 0 {
            return fail(&trace, "input size, channels and time steps must be positive".into());
        }
        if self.encoder.is_empty() || self.temporal.is_empty() {
            return fail(&trace, "need at least one encoder and one temporal layer".into());
        }
        let mut n = self.input_size;
        trace.push("input", self.input_channels, n);

        for (k, spec) in self.encoder_specs().iter().enumerate() {
            let name = format!("conv{}", k + 1);
            if let Err(e) = spec.validate().and_then(|_| spec.output_size(n)) {
                return fail(&trace, format!("{name}: {e}"));
            }
            n = spec.output_size(n)?;
            trace.push(&format!("{name} {0}x{0}/{1} pad {2}", spec.kernel, spec.stride, spec.padding), spec.out_channels, n);
        }
        for (k, spec) in self.temporal_specs().iter().enumerate() {
            let name = format!("convlstm{}", k + 1);
            if let Err(e) = spec.validate() {
                return fail(&trace, format!("{name}: {e}"));
            }
            trace.push(&format!("{name} {0}x{0}", spec.kernel), spec.hidden_channels, n);
        }

        if self.decoder.len() != self.encoder.len() {
            return fail(
                &trace,
                format!(
                    "decoder has {} layers but the encoder has {}",
                    self.decoder.len(),
                    self.encoder.len()
                ),
            );
        }
        let enc = self.encoder_specs();
        for (k, spec) in self.decoder_specs().iter().enumerate() {
            let name = format!("deconv{}", k + 1);
            let mirror = &enc[enc.len() - 1 - k];
            if (spec.kernel, spec.stride, spec.padding) != (mirror.kernel, mirror.stride, mirror.padding)
                || spec.out_channels != mirror.in_channels
            {
                return fail(
                    &trace,
                    format!(
                        "{name} (kernel {}, stride {}, padding {}, {} filters) does not mirror conv{} \
                         (kernel {}, stride {}, padding {}, {} input channels)",
                        spec.kernel,
                        spec.stride,
                        spec.padding,
                        spec.out_channels,
                        enc.len() - k,
                        mirror.kernel,
                        mirror.stride,
                        mirror.padding,
                        mirror.in_channels
                    ),
                );
            }
            n = match spec.validate().and_then(|_| spec.transposed_output_size(n)) {
                Ok(n) => n,
                Err(e) => return fail(&trace, format!("{name}: {e}")),
            };
            trace.push(&format!("{name} {0}x{0}/{1} pad {2}", spec.kernel, spec.stride, spec.padding), spec.out_channels, n);
        }
        if n != self.input_size {
            return fail(
                &trace,
                format!("decoder output {n}x{n} does not restore the {0}x{0} input", self.input_size),
            );
        }
        Ok(trace)
    }

    /// Spatial side of the code fed to the ConvLSTM stack.
    pub fn code_size(&self) -> Result<usize> {
        let mut n = self.input_size;
        for s in self.encoder_specs() {
            n = s.output_size(n)?;
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SizeTrace {
    pub layers: Vec<(String, usize, usize)>,
}

impl SizeTrace {
    fn push(&mut self, name: &str, channels: usize, size: usize) {
        self.layers.push((name.to_string(), channels, size));
    }
}

impl fmt::Display for SizeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "size trace:")?;
        for (name, c, n) in &self.layers {
            write!(f, "\n  {name:<28} {c} x {n} x {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_returns_to_227() {
        let trace = ModelConfig::default().size_trace().unwrap();
        let sizes: Vec<usize> = trace.layers.iter().map(|l| l.2).collect();
        assert_eq!(sizes, vec![227, 55, 26, 26, 26, 26, 55, 227]);
        let channels: Vec<usize> = trace.layers.iter().map(|l| l.1).collect();
        assert_eq!(channels, vec![1, 128, 64, 64, 32, 64, 128, 1]);
    }

    #[test]
    fn tiny_chain() {
        let trace = ModelConfig::tiny().size_trace().unwrap();
        let sizes: Vec<usize> = trace.layers.iter().map(|l| l.2).collect();
        assert_eq!(sizes, vec![16, 7, 3, 3, 3, 3, 7, 16]);
    }

    #[test]
    fn desk_chain() {
        let trace = ModelConfig::desk().size_trace().unwrap();
        let sizes: Vec<usize> = trace.layers.iter().map(|l| l.2).collect();
        assert_eq!(sizes, vec![32, 15, 7, 7, 7, 7, 15, 32]);
        let channels: Vec<usize> = trace.layers.iter().map(|l| l.1).collect();
        assert_eq!(channels, vec![1, 8, 8, 8, 8, 8, 8, 1]);
    }

    #[test]
    fn mismatched_decoder_names_first_offender() {
        let mut cfg = ModelConfig::default();
        cfg.decoder[0].kernel = 3;
        let err = cfg.size_trace().unwrap_err().to_string();
        assert!(err.contains("deconv1"), "{err}");
        assert!(err.contains("conv2"), "{err}");
        assert!(err.contains("size trace"), "{err}");

        let mut cfg = ModelConfig::default();
        cfg.decoder[1].filters = 3;
        let err = cfg.size_trace().unwrap_err().to_string();
        assert!(err.contains("deconv2"), "{err}");
    }

    #[test]
    fn non_restoring_chain_is_rejected_with_trace() {
        let mut cfg = ModelConfig::default();
        cfg.input_size = 228;
        let err = cfg.size_trace().unwrap_err().to_string();
        assert!(err.contains("does not restore"), "{err}");
        assert!(err.contains("deconv2"), "{err}");
    }

    #[test]
    fn strided_recurrence_is_rejected() {
        let mut cfg = ModelConfig::tiny();
        cfg.temporal[1].stride = 2;
        let err = cfg.size_trace().unwrap_err().to_string();
        assert!(err.contains("convlstm2") && err.contains("stride"), "{err}");
    }
}
