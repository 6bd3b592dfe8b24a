use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative written in terms of the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => S::one() - y * y,
            Activation::Sigmoid => y * (S::one() - y),
        }
    }

    pub fn forward<S: Scalar>(self, input: &Tensor<S>) -> Tensor<S> {
        input.map(|x| self.apply(x))
    }

    /// Gradient w.r.t. the pre-activation given the saved forward output.
    pub fn backward<S: Scalar>(self, grad_out: &Tensor<S>, output: &Tensor<S>) -> Result<Tensor<S>> {
        grad_out.zip_map(output, "activation backward", |g, y| {
            g * self.derivative_from_output(y)
        })
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    // Branch keeps exp() from overflowing for large |x|.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert_eq!(Activation::Tanh.derivative_from_output(0.0f64), 1.0);
    }

    #[test]
    fn tanh_derivative_matches_central_difference() {
        let h = 1e-5;
        for &x in &[0.0f64, 0.3, -1.2, 2.5] {
            let fd = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            let an = Activation::Tanh.derivative_from_output(x.tanh());
            assert!((fd - an).abs() < 1e-9, "x={x}: {fd} vs {an}");
            let fd = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            let an = Activation::Sigmoid.derivative_from_output(sigmoid(x));
            assert!((fd - an).abs() < 1e-9, "x={x}: {fd} vs {an}");
        }
    }

    #[test]
    fn ranges_hold_for_extreme_inputs() {
        for &x in &[-700.0f64, -30.0, -1.0, 1.0, 30.0, 700.0] {
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s) && s.is_finite());
            let t = x.tanh();
            assert!((-1.0..=1.0).contains(&t));
        }
        for &x in &[-5.0f64, -0.1, 0.1, 5.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
            assert!(x.tanh() > -1.0 && x.tanh() < 1.0);
        }
    }
}
