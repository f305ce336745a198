use rand::RngCore;

use super::{missing_cache, Init};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Shape, Tensor};

/// Fully connected layer: `y = x·W + b` with `W` stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Dense<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub(crate) input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[inputs, outputs] = weights.dims() else {
            return Err(Error::Shape(format!("dense weights must be [in, out], got {:?}", weights.dims())));
        };
        if bias.dims() != [outputs] {
            return Err(Error::Shape(format!(
                "dense bias must be [{outputs}], got {:?}",
                bias.dims()
            )));
        }
        Ok(Dense {
            grad_weights: Tensor::zeros(&[inputs, outputs])?,
            grad_bias: Tensor::zeros(&[outputs])?,
            weights,
            bias,
            input: None,
        })
    }

    /// Randomly initialized weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, init: Init, rng: &mut dyn RngCore) -> Result<Self> {
        let weights = init.tensor(&[inputs, outputs], inputs, outputs, rng)?;
        Self::new(weights, Tensor::zeros(&[outputs])?)
    }

    pub fn inputs(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.dims()[1]
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.inputs()] {
            return Err(Error::Shape(format!(
                "dense expects [{}] per sample, got {input:?}",
                self.inputs()
            )));
        }
        Ok(vec![self.outputs()])
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, inputs] = x.dims() else {
            return Err(Error::Shape(format!("dense input must be [n, in], got {:?}", x.dims())));
        };
        if inputs != self.inputs() {
            return Err(Error::Shape(format!(
                "dense expects {} inputs, got {inputs}",
                self.inputs()
            )));
        }
        let outputs = self.outputs();
        let mut out: Vec<T> = (0..n).flat_map(|_| self.bias.data().iter().copied()).collect();
        gemm(
            MatRef::row_major(x.data(), n, inputs),
            MatRef::row_major(self.weights.data(), inputs, outputs),
            &mut out,
            true,
        );
        Ok(Tensor::from_parts(Shape::new(&[n, outputs])?, out))
    }

    pub(crate) fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// `dW = xᵀ·g`, `db = Σ_rows g`, `dx = g·Wᵀ`.
    pub(crate) fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.take().ok_or_else(|| missing_cache("dense"))?;
        let (n, inputs, outputs) = (x.outer_len(), self.inputs(), self.outputs());
        if grad.dims() != [n, outputs] {
            return Err(Error::Shape(format!(
                "dense upstream gradient must be [{n}, {outputs}], got {:?}",
                grad.dims()
            )));
        }
        gemm(
            MatRef::transposed(x.data(), inputs, n),
            MatRef::row_major(grad.data(), n, outputs),
            self.grad_weights.data_mut(),
            false,
        );
        let gb = self.grad_bias.data_mut();
        gb.iter_mut().for_each(|v| *v = T::zero());
        for row in grad.data().chunks_exact(outputs) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc += g;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = vec![T::zero(); n * inputs];
        gemm(
            MatRef::row_major(grad.data(), n, outputs),
            MatRef::transposed(self.weights.data(), outputs, inputs),
            &mut dx,
            false,
        );
        Ok(Some(Tensor::from_parts(x.shape().clone(), dx)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias_rows() {
        let layer = Dense::new(
            Tensor::<f64>::zeros(&[3, 2]).unwrap(),
            Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap(),
        )
        .unwrap();
        let out = layer.infer(&Tensor::full(&[4, 3], 7.0).unwrap()).unwrap();
        for row in out.data().chunks(2) {
            assert_eq!(row, &[1.5, -2.0]);
        }
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let eye = Tensor::<f64>::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }).unwrap();
        let layer = Dense::new(eye, Tensor::zeros(&[3]).unwrap()).unwrap();
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5).unwrap();
        assert_eq!(layer.infer(&x).unwrap(), x);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, i, o) = (5, 7, 4);
        let w = Tensor::<f64>::from_fn(&[i, o], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let b = Tensor::<f64>::from_fn(&[o], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let x = Tensor::<f64>::from_fn(&[n, i], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let out = Dense::new(w.clone(), b.clone()).unwrap().infer(&x).unwrap();
        for r in 0..n {
            for c in 0..o {
                let mut want = b.data()[c];
                for p in 0..i {
                    want += x.data()[r * i + p] * w.data()[p * o + c];
                }
                assert!((out.data()[r * o + c] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_layer_backward_is_transpose_products() {
        // x = [[1, 2]], W = [[1, 0, 2], [0, 1, 3]], upstream g = [[1, -1, 0.5]]
        let mut layer = Dense::new(
            Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 0.0, 2.0, 0.0, 1.0, 3.0]).unwrap(),
            Tensor::zeros(&[3]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        layer.forward_train(&x).unwrap();
        let g = Tensor::from_vec(&[1, 3], vec![1.0, -1.0, 0.5]).unwrap();
        let dx = layer.backward(&g, true).unwrap().unwrap();
        assert_eq!(layer.grad_weights.data(), &[1.0, -1.0, 0.5, 2.0, -2.0, 1.0]);
        assert_eq!(layer.grad_bias.data(), &[1.0, -1.0, 0.5]);
        assert_eq!(dx.data(), &[2.0, 0.5]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut layer = Dense::<f32>::new(Tensor::zeros(&[2, 2]).unwrap(), Tensor::zeros(&[2]).unwrap()).unwrap();
        let g = Tensor::zeros(&[1, 2]).unwrap();
        assert!(matches!(layer.backward(&g, true), Err(Error::State(_))));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(Dense::<f32>::new(Tensor::zeros(&[2, 2]).unwrap(), Tensor::zeros(&[3]).unwrap()).is_err());
        let layer = Dense::<f32>::new(Tensor::zeros(&[2, 2]).unwrap(), Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!(matches!(layer.infer(&Tensor::zeros(&[1, 3]).unwrap()), Err(Error::Shape(_))));
    }
}
