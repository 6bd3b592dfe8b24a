use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{combine, combine_backward, Gates, LstmParams, LstmState};
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::{conv2d, conv2d_backward, init, ConvSpec, Tensor};

/// How the forget, input and output gates see `C_{t-1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Peephole {
    /// Gates see only `[h_{t-1}, x_t]`.
    None,
    /// `C_{t-1}` is appended as extra input channels of the gate convolutions.
    #[default]
    Concat,
    /// Elementwise learned weights times `C_{t-1}`, added to the gate pre-activation.
    Hadamard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLstmSpec {
    pub input_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub peephole: Peephole,
}

impl ConvLstmSpec {
    pub fn new(input_channels: usize, hidden_channels: usize, kernel: usize, peephole: Peephole) -> Self {
        ConvLstmSpec {
            input_channels,
            hidden_channels,
            kernel,
            stride: 1,
            peephole,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::Config(format!("ConvLSTM channel counts must be positive: {self:?}")));
        }
        if self.stride != 1 {
            return Err(Error::Config(format!(
                "ConvLSTM recurrent convolutions must use stride 1 to keep the state size, got {}",
                self.stride
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "ConvLSTM kernel must be odd for same-size padding, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    fn gate_in_channels(&self) -> usize {
        let base = self.hidden_channels + self.input_channels;
        match self.peephole {
            Peephole::Concat => base + self.hidden_channels,
            _ => base,
        }
    }

    /// Forget, input and output gates evaluated as one convolution.
    fn fused_gate_conv(&self) -> ConvSpec {
        ConvSpec::same(self.gate_in_channels(), 3 * self.hidden_channels, self.kernel)
    }

    fn candidate_conv(&self) -> ConvSpec {
        ConvSpec::same(self.hidden_channels + self.input_channels, self.hidden_channels, self.kernel)
    }
}

/// `[w_f; w_i; w_o]` and the matching biases stacked along the output channels.
fn fused_gates<S: Scalar>(p: &LstmParams<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    Ok((
        Tensor::concat0(&[&p.w_f, &p.w_i, &p.w_o])?,
        Tensor::concat0(&[&p.b_f, &p.b_i, &p.b_o])?,
    ))
}

/// Elementwise peephole weights, each `[H_c, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeepholeWeights<S> {
    pub w_cf: Tensor<S>,
    pub w_ci: Tensor<S>,
    pub w_co: Tensor<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<S> {
    pub gates: LstmParams<S>,
    pub peephole: Option<PeepholeWeights<S>>,
}

impl<S: Scalar> ConvLstmParams<S> {
    pub fn zeros_like(&self) -> Self {
        ConvLstmParams {
            gates: self.gates.zeros_like(),
            peephole: self.peephole.as_ref().map(|p| PeepholeWeights {
                w_cf: Tensor::zeros_like(&p.w_cf),
                w_ci: Tensor::zeros_like(&p.w_ci),
                w_co: Tensor::zeros_like(&p.w_co),
            }),
        }
    }
}

impl<S: Scalar> Parameters<S> for ConvLstmParams<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = self.gates.named();
        if let Some(p) = &self.peephole {
            out.push(("w_cf".into(), &p.w_cf));
            out.push(("w_ci".into(), &p.w_ci));
            out.push(("w_co".into(), &p.w_co));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.gates.tensors_mut();
        if let Some(p) = &mut self.peephole {
            out.extend([&mut p.w_cf, &mut p.w_ci, &mut p.w_co]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmCell<S> {
    pub spec: ConvLstmSpec,
    /// Spatial size `(H, W)` of input and state.
    pub spatial: (usize, usize),
    pub params: ConvLstmParams<S>,
}

#[derive(Clone, Debug)]
pub struct ConvStepCache<S> {
    z_gate: Tensor<S>,
    /// `[h, x]` when the gate input also carries `C_{t-1}`; otherwise the gate input is reused.
    z_candidate: Option<Tensor<S>>,
    gates: Gates<S>,
    c_prev: Tensor<S>,
    tanh_c: Tensor<S>,
}

impl<S: Scalar> ConvLstmCell<S> {
    pub fn new<R: Rng + ?Sized>(spec: ConvLstmSpec, spatial: (usize, usize), rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let hc = spec.hidden_channels;
        let m = spec.kernel;
        let gate_in = spec.gate_in_channels();
        let cand_in = hc + spec.input_channels;
        let mut gate = |cin: usize| init::glorot_uniform(&[hc, cin, m, m], cin * m * m, hc * m * m, rng);
        let gates = LstmParams {
            w_f: gate(gate_in),
            w_i: gate(gate_in),
            w_c: gate(cand_in),
            w_o: gate(gate_in),
            b_f: Tensor::zeros(&[hc]),
            b_i: Tensor::zeros(&[hc]),
            b_c: Tensor::zeros(&[hc]),
            b_o: Tensor::zeros(&[hc]),
        };
        let peephole = (spec.peephole == Peephole::Hadamard).then(|| {
            let shape = [hc, spatial.0, spatial.1];
            PeepholeWeights {
                w_cf: Tensor::zeros(&shape),
                w_ci: Tensor::zeros(&shape),
                w_co: Tensor::zeros(&shape),
            }
        });
        Ok(ConvLstmCell {
            spec,
            spatial,
            params: ConvLstmParams { gates, peephole },
        })
    }

    pub fn state_shape(&self) -> [usize; 3] {
        [self.spec.hidden_channels, self.spatial.0, self.spatial.1]
    }

    pub fn zero_state(&self) -> LstmState<S> {
        LstmState::zeros(&self.state_shape())
    }

    fn check(&self, x: &Tensor<S>, prev: &LstmState<S>) -> Result<()> {
        self.spec.validate()?;
        let (h, w) = self.spatial;
        x.expect_shape(&[self.spec.input_channels, h, w], "conv_lstm_step input")?;
        let st = self.state_shape();
        prev.h.expect_shape(&st, "conv_lstm_step h")?;
        prev.c.expect_shape(&st, "conv_lstm_step C")?;
        if (self.spec.peephole == Peephole::Hadamard) != self.params.peephole.is_some() {
            return Err(Error::Config("peephole weights do not match the peephole mode".into()));
        }
        Ok(())
    }

    pub fn step(&self, x: &Tensor<S>, prev: &LstmState<S>) -> Result<(LstmState<S>, ConvStepCache<S>)> {
        self.check(x, prev)?;
        let p = &self.params.gates;
        let z_hx = Tensor::concat0(&[&prev.h, x])?;
        let (z_gate, z_candidate) = match self.spec.peephole {
            Peephole::Concat => (Tensor::concat0(&[&prev.h, x, &prev.c])?, Some(z_hx)),
            _ => (z_hx, None),
        };
        let z_cand = z_candidate.as_ref().unwrap_or(&z_gate);
        let hc = self.spec.hidden_channels;
        let (w_fio, b_fio) = fused_gates(p)?;
        let mut fio = conv2d(&z_gate, &w_fio, &b_fio, &self.spec.fused_gate_conv())?
            .split0(&[hc, hc, hc])?
            .into_iter();
        let (f, i, o) = (fio.next().unwrap(), fio.next().unwrap(), fio.next().unwrap());
        let mut pre = [f, i, conv2d(z_cand, &p.w_c, &p.b_c, &self.spec.candidate_conv())?, o];
        if let Some(pw) = &self.params.peephole {
            for (k, w) in [(0, &pw.w_cf), (1, &pw.w_ci), (3, &pw.w_co)] {
                pre[k].add_assign(&w.mul(&prev.c)?)?;
            }
        }
        let (gates, state, tanh_c) = combine(pre, &prev.c);
        let cache = ConvStepCache {
            z_gate,
            z_candidate,
            gates,
            c_prev: prev.c.clone(),
            tanh_c,
        };
        Ok((state, cache))
    }

    /// Returns `(dx, dh_prev, dc_prev)` and accumulates parameter gradients into `grads`.
    pub fn step_backward(
        &self,
        dh: &Tensor<S>,
        dc_next: &Tensor<S>,
        cache: &ConvStepCache<S>,
        grads: &mut ConvLstmParams<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
        let st = self.state_shape();
        dh.expect_shape(&st, "conv_lstm backward dh")?;
        dc_next.expect_shape(&st, "conv_lstm backward dC")?;
        let (dpre, mut dc_prev) = combine_backward(dh, dc_next, &cache.gates, &cache.c_prev, &cache.tanh_c);
        let p = &self.params.gates;
        let hc = self.spec.hidden_channels;
        let xc = self.spec.input_channels;
        let z_cand = cache.z_candidate.as_ref().unwrap_or(&cache.z_gate);

        let (w_fio, _) = fused_gates(p)?;
        let d_fio = Tensor::concat0(&[&dpre[0], &dpre[1], &dpre[3]])?;
        let g_fio = conv2d_backward(&d_fio, &cache.z_gate, &w_fio, &self.spec.fused_gate_conv())?;
        let gc = conv2d_backward(&dpre[2], z_cand, &p.w_c, &self.spec.candidate_conv())?;

        let g = &mut grads.gates;
        let dw = g_fio.filters.split0(&[hc, hc, hc])?;
        let db = g_fio.bias.split0(&[hc, hc, hc])?;
        g.w_f.add_assign(&dw[0])?;
        g.w_i.add_assign(&dw[1])?;
        g.w_o.add_assign(&dw[2])?;
        g.b_f.add_assign(&db[0])?;
        g.b_i.add_assign(&db[1])?;
        g.b_o.add_assign(&db[2])?;
        g.w_c.add_assign(&gc.filters)?;
        g.b_c.add_assign(&gc.bias)?;

        if let (Some(pw), Some(gw)) = (&self.params.peephole, &mut grads.peephole) {
            for (k, w, dw) in [
                (0, &pw.w_cf, &mut gw.w_cf),
                (1, &pw.w_ci, &mut gw.w_ci),
                (3, &pw.w_co, &mut gw.w_co),
            ] {
                dw.add_assign(&dpre[k].mul(&cache.c_prev)?)?;
                dc_prev.add_assign(&dpre[k].mul(w)?)?;
            }
        }

        let dz_gate = g_fio.input;
        let (mut dh_prev, mut dx) = match self.spec.peephole {
            Peephole::Concat => {
                let mut parts = dz_gate.split0(&[hc, xc, hc])?.into_iter();
                let (dh, dx, dc) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
                dc_prev.add_assign(&dc)?;
                (dh, dx)
            }
            _ => {
                let mut parts = dz_gate.split0(&[hc, xc])?.into_iter();
                (parts.next().unwrap(), parts.next().unwrap())
            }
        };
        let mut cparts = gc.input.split0(&[hc, xc])?.into_iter();
        dh_prev.add_assign(&cparts.next().unwrap())?;
        dx.add_assign(&cparts.next().unwrap())?;
        Ok((dx, dh_prev, dc_prev))
    }
}

/// Layers applied in order at every time step; layer `k` consumes layer `k-1`'s hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmStack<S> {
    pub cells: Vec<ConvLstmCell<S>>,
}

#[derive(Clone, Debug)]
pub struct StackCache<S> {
    /// `steps[layer][t]`
    steps: Vec<Vec<ConvStepCache<S>>>,
}

pub type StackGrads<S> = Vec<ConvLstmParams<S>>;

impl<S: Scalar> ConvLstmStack<S> {
    pub fn new(cells: Vec<ConvLstmCell<S>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Config("ConvLSTM stack needs at least one layer".into()));
        }
        for pair in cells.windows(2) {
            if pair[1].spec.input_channels != pair[0].spec.hidden_channels || pair[1].spatial != pair[0].spatial {
                return Err(Error::Config(format!(
                    "ConvLSTM layer expecting {} input channels at {:?} follows a layer producing {} at {:?}",
                    pair[1].spec.input_channels, pair[1].spatial, pair[0].spec.hidden_channels, pair[0].spatial
                )));
            }
        }
        Ok(ConvLstmStack { cells })
    }

    /// Runs every layer from the zero state; returns the top layer's hidden states.
    pub fn forward(&self, inputs: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, StackCache<S>)> {
        forward_layers(&self.cells, inputs)
    }

    /// BPTT through all layers given `dL/dh_t` of the top layer.
    pub fn backward(&self, cache: &StackCache<S>, d_top: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, StackGrads<S>)> {
        if cache.steps.len() != self.cells.len() {
            return Err(Error::MissingCache("ConvLSTM stack"));
        }
        let mut grads: StackGrads<S> = self.cells.iter().map(|c| c.params.zeros_like()).collect();
        let mut upstream: Vec<Tensor<S>> = d_top.to_vec();
        for (layer, cell) in self.cells.iter().enumerate().rev() {
            let steps = &cache.steps[layer];
            if steps.len() != upstream.len() {
                return Err(Error::shape(
                    "conv_lstm backward",
                    format!("{} gradients for {} steps", upstream.len(), steps.len()),
                ));
            }
            let st = cell.state_shape();
            let mut dh_carry = Tensor::zeros(&st);
            let mut dc_carry = Tensor::zeros(&st);
            let mut dxs = vec![Tensor::zeros(&[1]); steps.len()];
            for t in (0..steps.len()).rev() {
                let dh = upstream[t].add(&dh_carry)?;
                let (dx, dh_prev, dc_prev) = cell.step_backward(&dh, &dc_carry, &steps[t], &mut grads[layer])?;
                dxs[t] = dx;
                dh_carry = dh_prev;
                dc_carry = dc_prev;
            }
            upstream = dxs;
        }
        Ok((upstream, grads))
    }
}

/// Runs a stack over `inputs [T, C, H, W]` and returns `[T, H_c, H, W]`.
pub fn conv_lstm_sequence<S: Scalar>(inputs: &Tensor<S>, layers: &[ConvLstmCell<S>]) -> Result<Tensor<S>> {
    if inputs.shape().len() != 4 {
        return Err(Error::shape(
            "conv_lstm_sequence",
            format!("expected [T, C, H, W], got {:?}", inputs.shape()),
        ));
    }
    let frames: Vec<Tensor<S>> = (0..inputs.shape()[0]).map(|t| inputs.slice0(t)).collect();
    let (out, _) = forward_layers(layers, &frames)?;
    Tensor::stack(&out)
}

fn forward_layers<S: Scalar>(cells: &[ConvLstmCell<S>], inputs: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, StackCache<S>)> {
    if inputs.is_empty() {
        return Err(Error::Input("empty input sequence".into()));
    }
    let mut seq: Vec<Tensor<S>> = inputs.to_vec();
    let mut steps = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut state = cell.zero_state();
        let mut layer_steps = Vec::with_capacity(seq.len());
        let mut out = Vec::with_capacity(seq.len());
        for x in &seq {
            let (next, cache) = cell.step(x, &state)?;
            out.push(next.h.clone());
            layer_steps.push(cache);
            state = next;
        }
        steps.push(layer_steps);
        seq = out;
    }
    Ok((seq, StackCache { steps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn cell(cin: usize, hc: usize, k: usize, peephole: Peephole, seed: u64) -> ConvLstmCell<f64> {
        ConvLstmCell::new(ConvLstmSpec::new(cin, hc, k, peephole), (4, 5), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_params_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mode in [Peephole::None, Peephole::Concat, Peephole::Hadamard] {
            let mut c = cell(2, 3, 3, mode, 0);
            c.params = c.params.zeros_like();
            let prev = LstmState {
                h: random(&[3, 4, 5], &mut rng),
                c: random(&[3, 4, 5], &mut rng).scale(2.0),
            };
            let (next, _) = c.step(&random(&[2, 4, 5], &mut rng), &prev).unwrap();
            for k in 0..prev.c.len() {
                let cp = prev.c.data()[k];
                assert_eq!(next.c.data()[k], 0.5 * cp);
                assert_eq!(next.h.data()[k], 0.5 * (0.5 * cp).tanh());
            }
        }
    }

    #[test]
    fn zero_params_constant_input_is_stationary() {
        let mut c = cell(1, 2, 3, Peephole::Concat, 0);
        c.params = c.params.zeros_like();
        let x = Tensor::full(&[1, 4, 5], 0.7);
        let (hs, _) = ConvLstmStack::new(vec![c]).unwrap().forward(&[x.clone(), x.clone(), x]).unwrap();
        assert_eq!(hs[0], hs[1]);
        assert_eq!(hs[1], hs[2]);
    }

    #[test]
    fn peephole_modes_agree_when_cell_state_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plain = cell(2, 3, 3, Peephole::None, 5);
        let mut concat = cell(2, 3, 3, Peephole::Concat, 6);
        let mut hadamard = cell(2, 3, 3, Peephole::Hadamard, 7);
        hadamard.params.gates = plain.params.gates.clone();
        let pw = hadamard.params.peephole.as_mut().unwrap();
        for w in [&mut pw.w_cf, &mut pw.w_ci, &mut pw.w_co] {
            *w = random(&[3, 4, 5], &mut rng);
        }
        // Copy the [h, x] input channels; the extra C channels keep their random weights.
        let g = &plain.params.gates;
        let cg = &mut concat.params.gates;
        for (dst, src) in [(&mut cg.w_f, &g.w_f), (&mut cg.w_i, &g.w_i), (&mut cg.w_o, &g.w_o)] {
            let (cin_src, per) = (src.shape()[1], 9);
            let cin_dst = dst.shape()[1];
            for o in 0..3 {
                for c in 0..cin_src {
                    for k in 0..per {
                        dst.data_mut()[(o * cin_dst + c) * per + k] = src.data()[(o * cin_src + c) * per + k];
                    }
                }
            }
        }
        cg.w_c = g.w_c.clone();
        let prev = LstmState {
            h: random(&[3, 4, 5], &mut rng),
            c: Tensor::zeros(&[3, 4, 5]),
        };
        let x = random(&[2, 4, 5], &mut rng);
        let (a, _) = plain.step(&x, &prev).unwrap();
        let (b, _) = concat.step(&x, &prev).unwrap();
        let (c, _) = hadamard.step(&x, &prev).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn single_step_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = cell(2, 3, 3, Peephole::Concat, 1);
        let x = random(&[2, 4, 5], &mut rng);
        let (step, _) = c.step(&x, &c.zero_state()).unwrap();
        let seq = conv_lstm_sequence(&Tensor::stack(std::slice::from_ref(&x)).unwrap(), &[c]).unwrap();
        assert_eq!(seq.slice0(0), step.h);
    }

    #[test]
    fn gate_and_state_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = cell(2, 3, 3, Peephole::Concat, 2);
        c.params.gates = c.params.gates.map(|t| t.scale(2.0));
        let mut state = c.zero_state();
        for _ in 0..5 {
            let (next, cache) = c.step(&random(&[2, 4, 5], &mut rng).scale(3.0), &state).unwrap();
            let g = &cache.gates;
            for k in 0..next.h.len() {
                for v in [g.f.data()[k], g.i.data()[k], g.o.data()[k]] {
                    assert!(v > 0.0 && v < 1.0);
                }
                assert!(g.c_hat.data()[k].abs() < 1.0);
                assert!(next.h.data()[k].abs() < 1.0);
            }
            state = next;
        }
    }

    #[test]
    fn cell_update_is_bilinear_given_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = cell(2, 3, 3, Peephole::None, 3);
        let prev = LstmState {
            h: random(&[3, 4, 5], &mut rng),
            c: random(&[3, 4, 5], &mut rng),
        };
        let (next, cache) = c.step(&random(&[2, 4, 5], &mut rng), &prev).unwrap();
        let g = &cache.gates;
        let scaled_c = prev.c.scale(2.0);
        let scaled_hat = g.c_hat.scale(2.0);
        for k in 0..next.c.len() {
            let doubled = g.f.data()[k] * scaled_c.data()[k] + g.i.data()[k] * scaled_hat.data()[k];
            assert!((doubled - 2.0 * next.c.data()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut spec = ConvLstmSpec::new(1, 2, 3, Peephole::None);
        spec.stride = 2;
        assert!(ConvLstmCell::<f64>::new(spec, (4, 4), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let even = ConvLstmSpec::new(1, 2, 4, Peephole::None);
        assert!(ConvLstmCell::<f64>::new(even, (4, 4), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let a = cell(1, 2, 3, Peephole::None, 0);
        let b = cell(3, 2, 3, Peephole::None, 0);
        assert!(ConvLstmStack::new(vec![a.clone(), b]).is_err());
        assert!(ConvLstmStack::new(vec![a]).unwrap().forward(&[]).is_err());
    }
}
