use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments for every parameter tensor, in `named()` order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    /// Steps taken so far.
    pub t: u64,
    pub config: AdamConfig,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<P: Parameters<S>>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<S>> = params.tensors().into_iter().map(Tensor::zeros_like).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
///
/// Nothing is modified when the gradients are non-finite or misaligned.
pub fn adam_step<S, P, G>(params: &mut P, grads: &G, state: &mut AdamState<S>) -> Result<()>
where
    S: Scalar,
    P: Parameters<S>,
    G: Parameters<S>,
{
    let named = grads.named();
    let mut targets = params.tensors_mut();
    if named.len() != targets.len() || state.m.len() != targets.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment slots",
                targets.len(),
                named.len(),
                state.m.len()
            ),
        ));
    }
    for ((name, g), p) in named.iter().zip(targets.iter()) {
        if g.shape() != p.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient {name} is {:?}, parameter is {:?}", g.shape(), p.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient {name} at Adam step {}", state.t + 1)));
        }
    }

    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
    let (one_b1, one_b2) = (S::one() - b1, S::one() - b2);
    let corr1 = S::one() / (S::one() - b1.powi(t));
    let corr2 = S::one() / (S::one() - b2.powi(t));
    let (lr, eps) = (S::of(c.learning_rate), S::of(c.epsilon));

    for (k, ((_, g), p)) in named.iter().zip(targets.iter_mut()).enumerate() {
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            let m_hat = *mi * corr1;
            let v_hat = *vi * corr2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
