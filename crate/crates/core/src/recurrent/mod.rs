//! Fully connected and convolutional LSTM cells with backpropagation through time.
//!
//! Gate order everywhere is forget, input, candidate, output. The gate
//! inputs are the channel/feature concatenation `[h_{t-1}, x_t]`, with the
//! convolutional cell optionally appending `C_{t-1}` for the forget, input and
//! output gates.

mod conv;
mod fc;

pub use conv::{
    conv_lstm_sequence, ConvLstmCell, ConvLstmParams, ConvLstmSpec, ConvLstmStack, ConvStepCache, Peephole,
    PeepholeWeights, StackCache, StackGrads,
};
pub use fc::{fc_lstm_step, FcLstmCell, FcSequenceCache, FcStepCache};

use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gate weights and biases. Matrices `[H, H + X]` for the fully connected
/// cell, filter banks `[H, C_gate, m, m]` for the convolutional one.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<S> {
    pub w_f: Tensor<S>,
    pub w_i: Tensor<S>,
    pub w_c: Tensor<S>,
    pub w_o: Tensor<S>,
    pub b_f: Tensor<S>,
    pub b_i: Tensor<S>,
    pub b_c: Tensor<S>,
    pub b_o: Tensor<S>,
}

impl<S: Scalar> LstmParams<S> {
    pub fn zeros_like(&self) -> Self {
        self.map(Tensor::zeros_like)
    }

    pub fn map(&self, f: impl Fn(&Tensor<S>) -> Tensor<S>) -> Self {
        LstmParams {
            w_f: f(&self.w_f),
            w_i: f(&self.w_i),
            w_c: f(&self.w_c),
            w_o: f(&self.w_o),
            b_f: f(&self.b_f),
            b_i: f(&self.b_i),
            b_c: f(&self.b_c),
            b_o: f(&self.b_o),
        }
    }
}

impl<S: Scalar> Parameters<S> for LstmParams<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        vec![
            ("w_f".into(), &self.w_f),
            ("w_i".into(), &self.w_i),
            ("w_c".into(), &self.w_c),
            ("w_o".into(), &self.w_o),
            ("b_f".into(), &self.b_f),
            ("b_i".into(), &self.b_i),
            ("b_c".into(), &self.b_c),
            ("b_o".into(), &self.b_o),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub h: Tensor<S>,
    pub c: Tensor<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        LstmState {
            h: Tensor::zeros(shape),
            c: Tensor::zeros(shape),
        }
    }
}

/// Gate activations saved by a forward step.
#[derive(Clone, Debug)]
pub struct Gates<S> {
    pub f: Tensor<S>,
    pub i: Tensor<S>,
    pub c_hat: Tensor<S>,
    pub o: Tensor<S>,
}

/// Elementwise tail shared by both cells: given gate pre-activations, produce
/// the new state.
pub(crate) fn combine<S: Scalar>(
    pre: [Tensor<S>; 4],
    c_prev: &Tensor<S>,
) -> (Gates<S>, LstmState<S>, Tensor<S>) {
    use crate::tensor::Activation::{Sigmoid, Tanh};
    let [pf, pi, pc, po] = pre;
    let gates = Gates {
        f: Sigmoid.forward(&pf),
        i: Sigmoid.forward(&pi),
        c_hat: Tanh.forward(&pc),
        o: Sigmoid.forward(&po),
    };
    let c = Tensor::from_fn(c_prev.shape(), |k| {
        gates.f.data()[k] * c_prev.data()[k] + gates.i.data()[k] * gates.c_hat.data()[k]
    });
    let tanh_c = c.map(|v| v.tanh());
    let h = Tensor::from_fn(c.shape(), |k| gates.o.data()[k] * tanh_c.data()[k]);
    (gates, LstmState { h, c }, tanh_c)
}

/// Reverse of [`combine`]: returns gate pre-activation gradients and the
/// direct contribution to `dC_{t-1}`.
pub(crate) fn combine_backward<S: Scalar>(
    dh: &Tensor<S>,
    dc_next: &Tensor<S>,
    gates: &Gates<S>,
    c_prev: &Tensor<S>,
    tanh_c: &Tensor<S>,
) -> ([Tensor<S>; 4], Tensor<S>) {
    let n = dh.len();
    let one = S::one();
    let mut dpf = vec![S::zero(); n];
    let mut dpi = vec![S::zero(); n];
    let mut dpc = vec![S::zero(); n];
    let mut dpo = vec![S::zero(); n];
    let mut dc_prev = vec![S::zero(); n];
    let (f, i, ch, o) = (gates.f.data(), gates.i.data(), gates.c_hat.data(), gates.o.data());
    for k in 0..n {
        let g = dh.data()[k];
        let tc = tanh_c.data()[k];
        dpo[k] = g * tc * o[k] * (one - o[k]);
        let dc = dc_next.data()[k] + g * o[k] * (one - tc * tc);
        dpf[k] = dc * c_prev.data()[k] * f[k] * (one - f[k]);
        dpi[k] = dc * ch[k] * i[k] * (one - i[k]);
        dpc[k] = dc * i[k] * (one - ch[k] * ch[k]);
        dc_prev[k] = dc * f[k];
    }
    let shape = dh.shape();
    let t = |v| Tensor::new(shape.to_vec(), v).expect("gate gradient shape");
    ([t(dpf), t(dpi), t(dpc), t(dpo)], t(dc_prev))
}
