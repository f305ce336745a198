use std::marker::PhantomData;

use super::missing_cache;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `max(0, x)`; the subgradient at exactly 0 is 0.
#[derive(Clone, Debug, Default)]
pub struct Relu<T: Scalar> {
    pub(crate) input: Option<Tensor<T>>,
    _marker: PhantomData<T>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu {
            input: None,
            _marker: PhantomData,
        }
    }

    pub fn apply(x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| v.max(T::zero()))
    }

    pub(crate) fn forward_train(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let out = Self::apply(x);
        self.input = Some(x.clone());
        out
    }

    pub(crate) fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("relu"))?;
        relu_backward(&x, grad)
    }
}

/// Upstream gradient where `x > 0`, zero elsewhere.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if x.dims() != grad.dims() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            grad.dims(),
            x.dims()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_parts(x.shape().clone(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_examples() {
        let x = Tensor::<f64>::from_vec(&[3], vec![-2.0, 0.0, 3.0]).unwrap();
        assert_eq!(Relu::apply(&x).data(), &[0.0, 0.0, 3.0]);
        let mut relu = Relu::new();
        relu.forward_train(&x);
        let g = relu.backward(&Tensor::full(&[3], 1.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn backward_needs_cache() {
        let mut relu = Relu::<f32>::new();
        assert!(matches!(relu.backward(&Tensor::zeros(&[1]).unwrap()), Err(Error::State(_))));
    }
}
