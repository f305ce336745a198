//! Sequential layer stacks with hand-written forward and backward passes.
//!
//! Every layer works on batches whose leading dimension is the sample index.
//! A forward pass in [`Mode::Train`] caches what the backward pass needs;
//! [`Mode::Eval`] forwards are pure and never touch the RNG.

mod activation;
mod conv;
mod dense;
mod dropout;
mod flatten;
pub mod init;
pub mod loss;
pub mod optim;
pub mod persist;
mod pool;
pub mod train;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use activation::{relu_backward, Relu};
pub use conv::{conv_out_dim, Conv2d, ConvAlgo};
pub use dense::Dense;
pub use dropout::{dropout_forward, Dropout};
pub use flatten::Flatten;
pub use init::Init;
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{sgd_momentum_step, SgdMomentum};
pub use pool::MaxPool2d;
pub use train::{fit, fit_with, mean_loss, stream_rng, train_epoch, LrSchedule, TrainConfig, TrainData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Layer<T: Scalar> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    Relu(Relu<T>),
    MaxPool2d(MaxPool2d),
    Dropout(Dropout<T>),
    Flatten(Flatten),
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a preceding training forward"))
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu(_) => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten(_) => "flatten",
        }
    }

    /// Per-sample output extents for per-sample input extents `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(l) => l.output_shape(input),
            Layer::Conv2d(l) => l.output_shape(input),
            Layer::MaxPool2d(l) => l.output_shape(input),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::Relu(_) | Layer::Dropout(_) => Ok(input.to_vec()),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        if mode == Mode::Eval {
            self.clear_cache();
            return self.infer(x);
        }
        match self {
            Layer::Dense(l) => l.forward_train(x),
            Layer::Conv2d(l) => l.forward_train(x),
            Layer::Relu(l) => Ok(l.forward_train(x)),
            Layer::MaxPool2d(l) => l.forward_train(x),
            Layer::Dropout(l) => Ok(l.forward_train(x, rng)),
            Layer::Flatten(l) => l.forward_train(x),
        }
    }

    /// Evaluation-mode forward; takes `&self` so frozen stacks can be shared.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::Conv2d(l) => l.infer(x),
            Layer::Relu(_) => Ok(Relu::<T>::apply(x)),
            Layer::MaxPool2d(l) => l.infer(x).map(|(out, _)| out),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(_) => Flatten::apply(x),
        }
    }

    /// Propagates `grad` (w.r.t. this layer's output) back through the layer,
    /// storing parameter gradients. Returns the input gradient when requested.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Dense(l) => l.backward(grad, need_input_grad),
            Layer::Conv2d(l) => l.backward(grad, need_input_grad),
            Layer::Relu(l) => l.backward(grad).map(Some),
            Layer::MaxPool2d(l) => l.backward(grad).map(Some),
            Layer::Dropout(l) => l.backward(grad).map(Some),
            Layer::Flatten(l) => l.backward(grad).map(Some),
        }
    }

    fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.input = None,
            Layer::Conv2d(l) => l.input = None,
            Layer::Relu(l) => l.input = None,
            Layer::MaxPool2d(l) => l.cache = None,
            Layer::Dropout(l) => l.mask = None,
            Layer::Flatten(l) => l.input_dims = None,
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv2d(l) => vec![&l.filters, &l.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.filters, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn gradients(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense(l) => vec![&l.grad_weights, &l.grad_bias],
            Layer::Conv2d(l) => vec![&l.grad_filters, &l.grad_bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn parameters_and_gradients(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Dense(l) => vec![(&mut l.weights, &l.grad_weights), (&mut l.bias, &l.grad_bias)],
            Layer::Conv2d(l) => vec![(&mut l.filters, &l.grad_filters), (&mut l.bias, &l.grad_bias)],
            _ => Vec::new(),
        }
    }
}

/// An ordered, shape-checked stack of layers.
#[derive(Clone, Debug)]
pub struct Sequential<T: Scalar> {
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    /// Validates that each layer accepts the previous layer's output, starting
    /// from per-sample extents `input_shape`.
    pub fn new(input_shape: &[usize], layers: Vec<Layer<T>>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(shapes.last().expect("non-empty")).map_err(|e| {
                Error::Shape(format!("layer {i} ({}) rejects its input: {e}", layer.name()))
            })?;
            shapes.push(next);
        }
        Ok(Sequential {
            input_shape: input_shape.to_vec(),
            shapes,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    /// Per-sample extents after each layer, input first.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.dims().len() < 2 || x.inner_dims() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "stack expects [n, {:?}], got {:?}",
                self.input_shape,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Runs the batch through every layer, returning logits.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else {
            return Ok(x.clone());
        };
        let mut h = first.forward(x, mode, rng)?;
        for layer in layers {
            h = layer.forward(&h, mode, rng)?;
        }
        Ok(h)
    }

    /// Pure evaluation-mode forward.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut layers = self.layers.iter();
        let Some(first) = layers.next() else {
            return Ok(x.clone());
        };
        let mut h = first.infer(x)?;
        for layer in layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Softmax probabilities for a batch, evaluation mode.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.infer(x)?)
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        self.infer(x)?.argmax_rows()
    }

    /// Reverse-mode pass from the loss gradient w.r.t. the logits. Populates
    /// every parameter gradient; the first layer skips its input gradient.
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<()> {
        let mut grad = loss_grad.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            if let Some(g) = layer.backward(&grad, i > 0)? {
                grad = g;
            }
        }
        Ok(())
    }

    /// Like [`Sequential::backward`] but also returns the gradient w.r.t. the input.
    pub fn backward_with_input_grad(&mut self, loss_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut grad = loss_grad.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad, true)?.expect("input gradient requested");
        }
        Ok(grad)
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    pub fn gradients(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.gradients()).collect()
    }

    pub(crate) fn parameters_and_gradients(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_and_gradients())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}
