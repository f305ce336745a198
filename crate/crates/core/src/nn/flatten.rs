use super::missing_cache;
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// `[n, ...]` → `[n, prod(...)]`; pure relabeling of the row-major buffer.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    pub(crate) input_dims: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }

    pub fn apply<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.outer_len();
        x.reshape(&[n, x.len() / n])
    }

    pub(crate) fn forward_train<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_dims = Some(x.dims().to_vec());
        Self::apply(x)
    }

    pub(crate) fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let dims = self.input_dims.take().ok_or_else(|| missing_cache("flatten"))?;
        grad.reshape(&dims)
    }
}
