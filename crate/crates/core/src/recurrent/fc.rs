use rand::Rng;

use super::{combine, combine_backward, Gates, LstmParams, LstmState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{init, Tensor};

/// Fully connected LSTM over vectors: input `[X]`, state `[H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FcLstmCell<S> {
    pub input_size: usize,
    pub hidden_size: usize,
    pub params: LstmParams<S>,
}

#[derive(Clone, Debug)]
pub struct FcStepCache<S> {
    z: Tensor<S>,
    gates: Gates<S>,
    c_prev: Tensor<S>,
    tanh_c: Tensor<S>,
}

#[derive(Clone, Debug)]
pub struct FcSequenceCache<S> {
    steps: Vec<FcStepCache<S>>,
}

fn matvec<S: Scalar>(w: &Tensor<S>, z: &[S], b: &Tensor<S>) -> Tensor<S> {
    let cols = z.len();
    Tensor::from_fn(b.shape(), |r| {
        let row = &w.data()[r * cols..(r + 1) * cols];
        b.data()[r] + row.iter().zip(z).map(|(&a, &x)| a * x).sum::<S>()
    })
}

/// One step of the fully connected LSTM.
pub fn fc_lstm_step<S: Scalar>(x: &Tensor<S>, prev: &LstmState<S>, p: &LstmParams<S>) -> Result<LstmState<S>> {
    let hidden = prev.h.len();
    let cell = FcLstmCell {
        input_size: x.len(),
        hidden_size: hidden,
        params: p.clone(),
    };
    cell.step(x, prev).map(|(s, _)| s)
}

impl<S: Scalar> FcLstmCell<S> {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let wshape = [hidden_size, hidden_size + input_size];
        let fan_in = hidden_size + input_size;
        let mut w = || init::glorot_uniform(&wshape, fan_in, hidden_size, rng);
        let params = LstmParams {
            w_f: w(),
            w_i: w(),
            w_c: w(),
            w_o: w(),
            b_f: Tensor::zeros(&[hidden_size]),
            b_i: Tensor::zeros(&[hidden_size]),
            b_c: Tensor::zeros(&[hidden_size]),
            b_o: Tensor::zeros(&[hidden_size]),
        };
        FcLstmCell {
            input_size,
            hidden_size,
            params,
        }
    }

    fn check(&self, x: &Tensor<S>, prev: &LstmState<S>) -> Result<()> {
        let (xs, hs) = (self.input_size, self.hidden_size);
        x.expect_shape(&[xs], "fc_lstm_step input")?;
        prev.h.expect_shape(&[hs], "fc_lstm_step h")?;
        prev.c.expect_shape(&[hs], "fc_lstm_step C")?;
        let p = &self.params;
        for w in [&p.w_f, &p.w_i, &p.w_c, &p.w_o] {
            w.expect_shape(&[hs, hs + xs], "fc_lstm_step weights")?;
        }
        for b in [&p.b_f, &p.b_i, &p.b_c, &p.b_o] {
            b.expect_shape(&[hs], "fc_lstm_step bias")?;
        }
        Ok(())
    }

    pub fn step(&self, x: &Tensor<S>, prev: &LstmState<S>) -> Result<(LstmState<S>, FcStepCache<S>)> {
        self.check(x, prev)?;
        let z = Tensor::concat0(&[&prev.h, x])?;
        let p = &self.params;
        let pre = [
            matvec(&p.w_f, z.data(), &p.b_f),
            matvec(&p.w_i, z.data(), &p.b_i),
            matvec(&p.w_c, z.data(), &p.b_c),
            matvec(&p.w_o, z.data(), &p.b_o),
        ];
        let (gates, state, tanh_c) = combine(pre, &prev.c);
        let cache = FcStepCache {
            z,
            gates,
            c_prev: prev.c.clone(),
            tanh_c,
        };
        Ok((state, cache))
    }

    /// Returns `(dx, dh_prev, dc_prev)` and accumulates into `grads`.
    pub fn step_backward(
        &self,
        dh: &Tensor<S>,
        dc_next: &Tensor<S>,
        cache: &FcStepCache<S>,
        grads: &mut LstmParams<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
        dh.expect_shape(&[self.hidden_size], "fc_lstm backward dh")?;
        let (dpre, dc_prev) = combine_backward(dh, dc_next, &cache.gates, &cache.c_prev, &cache.tanh_c);
        let cols = self.hidden_size + self.input_size;
        let mut dz = vec![S::zero(); cols];
        let p = &self.params;
        let ws = [&p.w_f, &p.w_i, &p.w_c, &p.w_o];
        let gw = [&mut grads.w_f, &mut grads.w_i, &mut grads.w_c, &mut grads.w_o];
        for ((w, gw), d) in ws.into_iter().zip(gw).zip(&dpre) {
            for r in 0..self.hidden_size {
                let dr = d.data()[r];
                let row = r * cols;
                for c in 0..cols {
                    gw.data_mut()[row + c] += dr * cache.z.data()[c];
                    dz[c] += w.data()[row + c] * dr;
                }
            }
        }
        let gb = [&mut grads.b_f, &mut grads.b_i, &mut grads.b_c, &mut grads.b_o];
        for (gb, d) in gb.into_iter().zip(&dpre) {
            gb.add_assign(d)?;
        }
        let dh_prev = Tensor::new(vec![self.hidden_size], dz[..self.hidden_size].to_vec())?;
        let dx = Tensor::new(vec![self.input_size], dz[self.hidden_size..].to_vec())?;
        Ok((dx, dh_prev, dc_prev))
    }

    /// Unrolls from the zero state; returns every hidden state.
    pub fn sequence(&self, inputs: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, FcSequenceCache<S>)> {
        if inputs.is_empty() {
            return Err(Error::Input("empty input sequence".into()));
        }
        let mut state = LstmState::zeros(&[self.hidden_size]);
        let mut hs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (next, cache) = self.step(x, &state)?;
            hs.push(next.h.clone());
            steps.push(cache);
            state = next;
        }
        Ok((hs, FcSequenceCache { steps }))
    }

    /// BPTT given `dL/dh_t` for every step. Returns input gradients and parameter gradients.
    pub fn sequence_backward(&self, cache: &FcSequenceCache<S>, dhs: &[Tensor<S>]) -> Result<(Vec<Tensor<S>>, LstmParams<S>)> {
        if dhs.len() != cache.steps.len() {
            return Err(Error::shape(
                "fc_lstm sequence backward",
                format!("{} gradients for {} steps", dhs.len(), cache.steps.len()),
            ));
        }
        let mut grads = self.params.zeros_like();
        let mut dxs = vec![Tensor::zeros(&[self.input_size]); dhs.len()];
        let mut dh_carry = Tensor::zeros(&[self.hidden_size]);
        let mut dc_carry = Tensor::zeros(&[self.hidden_size]);
        for t in (0..dhs.len()).rev() {
            let dh = dhs[t].add(&dh_carry)?;
            let (dx, dh_prev, dc_prev) = self.step_backward(&dh, &dc_carry, &cache.steps[t], &mut grads)?;
            dxs[t] = dx;
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        Ok((dxs, grads))
    }
}
