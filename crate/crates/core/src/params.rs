use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A bundle of learnable tensors with stable names and a stable order.
///
/// Gradient bundles reuse the parameter types, so `named()` on a gradient
/// lines up index-for-index with `tensors_mut()` on the parameters.
pub trait Parameters<S: Scalar> {
    fn named(&self) -> Vec<(String, &Tensor<S>)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn tensors(&self) -> Vec<&Tensor<S>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other` tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(s).expect("parameter bundles share shapes");
        }
    }

    fn scale_in_place(&mut self, k: S) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Prefixes every name from a nested bundle.
pub(crate) fn prefixed<'a, S: Scalar>(prefix: &str, inner: Vec<(String, &'a Tensor<S>)>) -> impl Iterator<Item = (String, &'a Tensor<S>)> + 'a {
    let prefix = prefix.to_string();
    inner.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

/// A lone tensor is a one-entry bundle named `value`.
impl<S: Scalar> Parameters<S> for Tensor<S> {
    fn named(&self) -> Vec<(String, &Tensor<S>)> {
        vec![("value".into(), self)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![self]
    }
}
