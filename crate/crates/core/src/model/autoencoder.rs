use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{prefixed, Parameters};
use crate::recurrent::{ConvLstmCell, ConvLstmStack, StackCache, StackGrads};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, conv2d_backward, deconv2d, deconv2d_backward, init, ConvSpec, Tensor};

/// `T` stacked preprocessed frames, `[T, C, H, W]`, plus the 1-based frame
/// numbers they were taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoVolume<S> {
    pub frames: Tensor<S>,
    pub source_indices: Vec<usize>,
}

impl<S: Scalar> VideoVolume<S> {
    pub fn new(frames: Tensor<S>, source_indices: Vec<usize>) -> Result<Self> {
        if frames.shape().len() != 4 || frames.shape()[0] != source_indices.len() {
            return Err(Error::shape(
                "VideoVolume",
                format!(
                    "frames {:?} with {} source indices",
                    frames.shape(),
                    source_indices.len()
                ),
            ));
        }
        Ok(VideoVolume { frames, source_indices })
    }

    pub fn time_steps(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn frame(&self, t: usize) -> Tensor<S> {
        self.frames.slice0(t)
    }
}

/// Filters and bias of one convolution or deconvolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<S> {
    pub filters: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> LayerParams<S> {
    fn zeros_like(&self) -> Self {
        LayerParams {
            filters: Tensor::zeros_like(&self.filters),
            bias: Tensor::zeros_like(&self.bias),
        }
    }
}

impl<S: Scalar> Parameters<S> for LayerParams<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        vec![("filters".into(), &self.filters), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.filters, &mut self.bias]
    }
}

/// Gradients for every learnable tensor, in the model's parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct AeGrads<S> {
    pub encoder: Vec<LayerParams<S>>,
    pub temporal: StackGrads<S>,
    pub decoder: Vec<LayerParams<S>>,
}

fn named_layers<'a, S: Scalar>(
    encoder: &'a [LayerParams<S>],
    temporal: Vec<Vec<(String, &'a Tensor<S>)>>,
    decoder: &'a [LayerParams<S>],
) -> Vec<(String, &'a Tensor<S>)> {
    let mut out = Vec::new();
    for (k, l) in encoder.iter().enumerate() {
        out.extend(prefixed(&format!("conv{}", k + 1), l.named()));
    }
    for (k, l) in temporal.into_iter().enumerate() {
        out.extend(prefixed(&format!("convlstm{}", k + 1), l));
    }
    for (k, l) in decoder.iter().enumerate() {
        out.extend(prefixed(&format!("deconv{}", k + 1), l.named()));
    }
    out
}

impl<S: Scalar> Parameters<S> for AeGrads<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        named_layers(
            &self.encoder,
            self.temporal.iter().map(|p| p.named()).collect(),
            &self.decoder,
        )
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.extend(l.tensors_mut());
        }
        for l in &mut self.temporal {
            out.extend(l.tensors_mut());
        }
        for l in &mut self.decoder {
            out.extend(l.tensors_mut());
        }
        out
    }
}

/// Two strided convolutions per frame, a ConvLSTM stack across time, and
/// mirrored deconvolutions per frame. Encoder and decoder weights are shared
/// by all `T` frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatioTemporalAE<S> {
    config: ModelConfig,
    encoder_specs: Vec<ConvSpec>,
    decoder_specs: Vec<ConvSpec>,
    pub encoder: Vec<LayerParams<S>>,
    pub temporal: ConvLstmStack<S>,
    pub decoder: Vec<LayerParams<S>>,
}

/// Per-frame activations of a stack of (de)convolutions: `acts[0]` is the
/// layer input, `acts[k + 1]` the activated output of layer `k`.
#[derive(Clone, Debug)]
struct FrameActs<S> {
    acts: Vec<Tensor<S>>,
}

/// Intermediates saved by [`SpatioTemporalAE::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache<S> {
    encoder: Vec<FrameActs<S>>,
    temporal: StackCache<S>,
    decoder: Vec<FrameActs<S>>,
}

impl<S: Scalar> SpatioTemporalAE<S> {
    /// Validates the layout and initializes every weight deterministically
    /// from `config.seed`. Biases start at zero.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.size_trace()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder_specs = config.encoder_specs();
        let decoder_specs = config.decoder_specs();
        let code = config.code_size()?;

        let conv_layer = |spec: &ConvSpec, rng: &mut ChaCha8Rng, transposed: bool| {
            let m2 = spec.kernel * spec.kernel;
            let shape = if transposed {
                [spec.in_channels, spec.out_channels, spec.kernel, spec.kernel]
            } else {
                [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel]
            };
            LayerParams {
                filters: init::glorot_uniform(&shape, spec.in_channels * m2, spec.out_channels * m2, rng),
                bias: Tensor::zeros(&[spec.out_channels]),
            }
        };
        let encoder = encoder_specs.iter().map(|s| conv_layer(s, &mut rng, false)).collect();
        let cells = config
            .temporal_specs()
            .into_iter()
            .map(|s| ConvLstmCell::new(s, (code, code), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let temporal = ConvLstmStack::new(cells)?;
        let decoder = decoder_specs.iter().map(|s| conv_layer(s, &mut rng, true)).collect();
        Ok(SpatioTemporalAE {
            config,
            encoder_specs,
            decoder_specs,
            encoder,
            temporal,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn time_steps(&self) -> usize {
        self.config.time_steps
    }

    /// `[T, C, H, W]` expected by [`Self::forward`].
    pub fn volume_shape(&self) -> [usize; 4] {
        let c = &self.config;
        [c.time_steps, c.input_channels, c.input_size, c.input_size]
    }

    pub fn zero_grads(&self) -> AeGrads<S> {
        AeGrads {
            encoder: self.encoder.iter().map(LayerParams::zeros_like).collect(),
            temporal: self.temporal.cells.iter().map(|c| c.params.zeros_like()).collect(),
            decoder: self.decoder.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    fn encode_frame(&self, frame: Tensor<S>) -> Result<FrameActs<S>> {
        let act = self.config.activation;
        let mut acts = vec![frame];
        for (spec, p) in self.encoder_specs.iter().zip(&self.encoder) {
            let z = conv2d(acts.last().unwrap(), &p.filters, &p.bias, spec)?;
            acts.push(act.forward(&z));
        }
        Ok(FrameActs { acts })
    }

    fn decode_frame(&self, code: Tensor<S>) -> Result<FrameActs<S>> {
        let act = self.config.activation;
        let mut acts = vec![code];
        for (spec, p) in self.decoder_specs.iter().zip(&self.decoder) {
            let z = deconv2d(acts.last().unwrap(), &p.filters, &p.bias, spec)?;
            acts.push(act.forward(&z));
        }
        Ok(FrameActs { acts })
    }

    /// Reconstruction plus every intermediate needed by [`Self::backward`].
    pub fn forward_cached(&self, input: &Tensor<S>) -> Result<(Tensor<S>, ForwardCache<S>)> {
        input.expect_shape(&self.volume_shape(), "forward")?;
        let t_len = self.config.time_steps;
        let encoder = (0..t_len)
            .into_par_iter()
            .map(|t| self.encode_frame(input.slice0(t)))
            .collect::<Result<Vec<_>>>()?;
        let codes: Vec<Tensor<S>> = encoder.iter().map(|e| e.acts.last().unwrap().clone()).collect();
        let (hidden, temporal) = self.temporal.forward(&codes)?;
        let decoder = hidden
            .into_par_iter()
            .map(|h| self.decode_frame(h))
            .collect::<Result<Vec<_>>>()?;
        let recon = Tensor::stack(&decoder.iter().map(|d| d.acts.last().unwrap().clone()).collect::<Vec<_>>())?;
        Ok((
            recon,
            ForwardCache {
                encoder,
                temporal,
                decoder,
            },
        ))
    }

    pub fn reconstruct(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_cached(input).map(|(r, _)| r)
    }

    pub fn forward(&self, volume: &VideoVolume<S>) -> Result<VideoVolume<S>> {
        Ok(VideoVolume {
            frames: self.reconstruct(&volume.frames)?,
            source_indices: volume.source_indices.clone(),
        })
    }

    /// Gradients of [`reconstruction_loss`] given the cache of the forward
    /// pass that produced `recon` from `input`.
    pub fn backward(&self, cache: &ForwardCache<S>, recon: &Tensor<S>, input: &Tensor<S>) -> Result<AeGrads<S>> {
        let t_len = self.config.time_steps;
        if cache.encoder.len() != t_len || cache.decoder.len() != t_len {
            return Err(Error::MissingCache("autoencoder forward"));
        }
        input.expect_shape(&self.volume_shape(), "backward input")?;
        recon.expect_shape(&self.volume_shape(), "backward recon")?;
        let d_recon = loss_gradient(recon, input)?;
        let act = self.config.activation;
        let mut grads = self.zero_grads();

        let dec: Vec<(Tensor<S>, Vec<LayerParams<S>>)> = (0..t_len)
            .into_par_iter()
            .map(|t| {
                let mut g = d_recon.slice0(t);
                let acts = &cache.decoder[t].acts;
                let mut layer_grads = Vec::with_capacity(self.decoder.len());
                for k in (0..self.decoder.len()).rev() {
                    let dz = act.backward(&g, &acts[k + 1])?;
                    let cg = deconv2d_backward(&dz, &acts[k], &self.decoder[k].filters, &self.decoder_specs[k])?;
                    layer_grads.push(LayerParams {
                        filters: cg.filters,
                        bias: cg.bias,
                    });
                    g = cg.input;
                }
                layer_grads.reverse();
                Ok((g, layer_grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut d_hidden = Vec::with_capacity(t_len);
        for (g, layer_grads) in dec {
            d_hidden.push(g);
            for (acc, lg) in grads.decoder.iter_mut().zip(&layer_grads) {
                acc.accumulate(lg);
            }
        }

        let (d_codes, temporal) = self.temporal.backward(&cache.temporal, &d_hidden)?;
        grads.temporal = temporal;

        let enc: Vec<Vec<LayerParams<S>>> = d_codes
            .into_par_iter()
            .enumerate()
            .map(|(t, mut g)| {
                let acts = &cache.encoder[t].acts;
                let mut layer_grads = Vec::with_capacity(self.encoder.len());
                for k in (0..self.encoder.len()).rev() {
                    let dz = act.backward(&g, &acts[k + 1])?;
                    let cg = conv2d_backward(&dz, &acts[k], &self.encoder[k].filters, &self.encoder_specs[k])?;
                    layer_grads.push(LayerParams {
                        filters: cg.filters,
                        bias: cg.bias,
                    });
                    g = cg.input;
                }
                layer_grads.reverse();
                Ok(layer_grads)
            })
            .collect::<Result<Vec<_>>>()?;
        for layer_grads in enc {
            for (acc, lg) in grads.encoder.iter_mut().zip(&layer_grads) {
                acc.accumulate(lg);
            }
        }
        Ok(grads)
    }

    /// Forward, loss and backward in one call.
    pub fn loss_and_gradients(&self, input: &Tensor<S>) -> Result<(S, AeGrads<S>)> {
        let (recon, cache) = self.forward_cached(input)?;
        let loss = mse(&recon, input)?;
        let grads = self.backward(&cache, &recon, input)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, input: &Tensor<S>) -> Result<S> {
        mse(&self.reconstruct(input)?, input)
    }
}

impl<S: Scalar> Parameters<S> for SpatioTemporalAE<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        named_layers(
            &self.encoder,
            self.temporal.cells.iter().map(|c| c.params.named()).collect(),
            &self.decoder,
        )
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.extend(l.tensors_mut());
        }
        for c in &mut self.temporal.cells {
            out.extend(c.params.tensors_mut());
        }
        for l in &mut self.decoder {
            out.extend(l.tensors_mut());
        }
        out
    }
}

fn mse<S: Scalar>(recon: &Tensor<S>, input: &Tensor<S>) -> Result<S> {
    let diff = recon.sub(input)?;
    Ok(diff.sum_sq() / S::of(diff.len() as f64))
}

/// `d/d recon` of the mean squared error.
fn loss_gradient<S: Scalar>(recon: &Tensor<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
    let k = S::of(2.0 / recon.len() as f64);
    recon.zip_map(input, "loss gradient", |r, x| k * (r - x))
}

/// Mean over all elements of the squared difference.
pub fn reconstruction_loss<S: Scalar>(recon: &VideoVolume<S>, input: &VideoVolume<S>) -> Result<S> {
    mse(&recon.frames, &input.frames)
}
