//! Weight initializers. Draws are made in `f64` and cast, so `f32` and `f64`
//! stacks built from the same seed hold the same values up to rounding.

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::tensor::{lit, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `U(−√(6/fan_in), √(6/fan_in))`, for layers feeding a ReLU.
    HeUniform,
    /// `U(−√(6/(fan_in+fan_out)), …)`, for the output layer.
    GlorotUniform,
    Zeros,
}

impl Init {
    pub fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
            Init::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::Zeros => 0.0,
        }
    }

    pub fn tensor<T: Scalar>(self, dims: &[usize], fan_in: usize, fan_out: usize, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let limit = self.limit(fan_in, fan_out);
        if limit == 0.0 {
            return Tensor::zeros(dims);
        }
        Tensor::from_fn(dims, |_| lit(rng.gen_range(-limit..limit)))
    }
}
