use super::{conv_out_dim, missing_cache};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Max pooling over NHWC batches; channel depth is unchanged.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub pool: usize,
    pub stride: usize,
    /// Input dims and, per output element, the flat input index that won.
    pub(crate) cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(pool: usize, stride: usize) -> Result<Self> {
        if pool == 0 || stride == 0 {
            return Err(Error::Geometry(format!("pool {pool} and stride {stride} must be positive")));
        }
        Ok(MaxPool2d {
            pool,
            stride,
            cache: None,
        })
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let &[h, w, c] = input else {
            return Err(Error::Shape(format!("maxpool expects [h, w, c] per sample, got {input:?}")));
        };
        Ok(vec![
            conv_out_dim(h, 0, self.pool, self.stride)?,
            conv_out_dim(w, 0, self.pool, self.stride)?,
            c,
        ])
    }

    /// Pooled output plus the argmax index of every output element.
    /// Ties keep the first maximum in row-major window order.
    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let &[n, h, w, c] = x.dims() else {
            return Err(Error::Shape(format!("maxpool input must be [n, h, w, c], got {:?}", x.dims())));
        };
        let out_dims = self.output_shape(&[h, w, c])?;
        let (oh, ow) = (out_dims[0], out_dims[1]);
        let data = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for i in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best_idx = ((i * h + oy * self.stride) * w + ox * self.stride) * c + ch;
                        let mut best = data[best_idx];
                        for dy in 0..self.pool {
                            for dx in 0..self.pool {
                                let idx = ((i * h + oy * self.stride + dy) * w + ox * self.stride + dx) * c + ch;
                                if data[idx] > best {
                                    best = data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        Ok((Tensor::from_parts(Shape::new(&[n, oh, ow, c])?, out), argmax))
    }

    pub(crate) fn forward_train<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = self.infer(x)?;
        self.cache = Some((x.dims().to_vec(), argmax));
        Ok(out)
    }

    /// Routes each upstream gradient to the input element that won its window.
    pub(crate) fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (dims, argmax) = self.cache.take().ok_or_else(|| missing_cache("maxpool2d"))?;
        if grad.len() != argmax.len() {
            return Err(Error::Shape(format!(
                "maxpool upstream gradient has {} elements, expected {}",
                grad.len(),
                argmax.len()
            )));
        }
        let shape = Shape::new(&dims)?;
        let mut dx = vec![T::zero(); shape.len()];
        for (&idx, &g) in argmax.iter().zip(grad.data()) {
            dx[idx] += g;
        }
        Ok(Tensor::from_parts(shape, dx))
    }
}
