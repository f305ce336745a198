//! The two fixed network architectures.
//!
//! Hidden layers feeding a ReLU use He-uniform weights, the output layer
//! Glorot-uniform, biases start at zero. All draws come from one
//! `(seed, INIT_STREAM)` generator, consumed in layer order.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::mnist::{CLASSES, PIXELS, SIDE};
use crate::nn::train::{stream_rng, INIT_STREAM};
use crate::nn::{Conv2d, Dense, Dropout, Flatten, Init, Layer, MaxPool2d, Relu, Sequential};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Mlp,
    Cnn,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
        }
    }

    pub fn spec(self) -> ArchitectureSpec {
        match self {
            Architecture::Mlp => mlp_spec(),
            Architecture::Cnn => cnn_spec(),
        }
    }

    pub fn build<T: Scalar>(self, seed: u64) -> Result<Sequential<T>> {
        self.spec().build(seed)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Architecture::Mlp),
            "cnn" => Ok(Architecture::Cnn),
            other => Err(Error::Domain(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Declarative description of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Dense { outputs: usize, init: Init },
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: usize, init: Init },
    Relu,
    MaxPool2d { pool: usize, stride: usize },
    Dropout { rate: f64 },
    Flatten,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub name: &'static str,
    /// Per-sample input extents.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// Instantiates the layers, drawing weights from `(seed, INIT_STREAM)`.
    pub fn build<T: Scalar>(&self, seed: u64) -> Result<Sequential<T>> {
        self.build_with(&mut stream_rng(seed, INIT_STREAM))
    }

    pub fn build_with<T: Scalar>(&self, rng: &mut dyn RngCore) -> Result<Sequential<T>> {
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let layer = match *spec {
                LayerSpec::Dense { outputs, init } => {
                    let &[inputs] = shape.as_slice() else {
                        return Err(Error::Shape(format!("dense layer needs a flat input, got {shape:?}")));
                    };
                    Layer::Dense(Dense::init(inputs, outputs, init, rng)?)
                }
                LayerSpec::Conv2d { filters, kernel, stride, padding, init } => {
                    let &[_, _, channels] = shape.as_slice() else {
                        return Err(Error::Shape(format!("conv layer needs [h, w, c], got {shape:?}")));
                    };
                    Layer::Conv2d(Conv2d::init(channels, filters, (kernel, kernel), stride, padding, init, rng)?)
                }
                LayerSpec::Relu => Layer::Relu(Relu::new()),
                LayerSpec::MaxPool2d { pool, stride } => Layer::MaxPool2d(MaxPool2d::new(pool, stride)?),
                LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
                LayerSpec::Flatten => Layer::Flatten(Flatten::new()),
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Sequential::new(&self.input_shape, layers)
    }
}

/// 784 → 4 × (dense 512, ReLU, dropout 0.2) → dense 10.
pub fn mlp_spec() -> ArchitectureSpec {
    let mut layers = Vec::new();
    for _ in 0..4 {
        layers.push(LayerSpec::Dense { outputs: 512, init: Init::HeUniform });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { rate: 0.2 });
    }
    layers.push(LayerSpec::Dense { outputs: CLASSES, init: Init::GlorotUniform });
    ArchitectureSpec {
        name: "mlp",
        input_shape: vec![PIXELS],
        layers,
    }
}

/// conv 32 → conv 64 → max-pool → dropout 0.25 → dense 128 → dropout 0.5 → dense 10.
pub fn cnn_spec() -> ArchitectureSpec {
    let conv = |filters| LayerSpec::Conv2d { filters, kernel: 3, stride: 1, padding: 0, init: Init::HeUniform };
    ArchitectureSpec {
        name: "cnn",
        input_shape: vec![SIDE, SIDE, 1],
        layers: vec![
            conv(32),
            LayerSpec::Relu,
            conv(64),
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { pool: 2, stride: 2 },
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Flatten,
            LayerSpec::Dense { outputs: 128, init: Init::HeUniform },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { outputs: CLASSES, init: Init::GlorotUniform },
        ],
    }
}

pub fn build_mlp<T: Scalar>(seed: u64) -> Result<Sequential<T>> {
    mlp_spec().build(seed)
}

pub fn build_cnn<T: Scalar>(seed: u64) -> Result<Sequential<T>> {
    cnn_spec().build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_shapes_and_parameter_count() {
        let net = build_mlp::<f32>(42).unwrap();
        assert_eq!(net.output_shape(), &[10]);
        assert_eq!(net.parameter_count(), 1_195_018);
    }

    #[test]
    fn cnn_shapes_and_parameter_count() {
        let net = build_cnn::<f32>(42).unwrap();
        let s = net.shapes();
        assert_eq!(s[1], vec![26, 26, 32]);
        assert_eq!(s[3], vec![24, 24, 64]);
        assert_eq!(s[5], vec![12, 12, 64]);
        assert_eq!(s[7], vec![9216]);
        assert_eq!(net.output_shape(), &[10]);
        assert_eq!(net.parameter_count(), 1_199_882);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_cnn::<f32>(7).unwrap();
        let b = build_cnn::<f32>(7).unwrap();
        let c = build_cnn::<f32>(8).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn biases_start_at_zero_and_weights_respect_limits() {
        let net = build_mlp::<f64>(1).unwrap();
        for layer in net.layers() {
            if let Layer::Dense(d) = layer {
                assert!(d.bias.data().iter().all(|&b| b == 0.0));
                let limit = (6.0 / d.inputs() as f64).sqrt();
                assert!(d.weights.data().iter().all(|w| w.abs() <= limit));
            }
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("MLP".parse::<Architecture>().unwrap(), Architecture::Mlp);
        assert_eq!("cnn".parse::<Architecture>().unwrap(), Architecture::Cnn);
        assert!("svm".parse::<Architecture>().is_err());
        assert_eq!(Architecture::Cnn.to_string(), "cnn");
    }
}
