//! One-vs-rest linear SVM trained in the primal with Pegasos.
//!
//! Each class `k` gets a binary problem with `y = +1` for label `k` and `-1`
//! otherwise, minimizing `(λ/2)(‖w‖² + b²) + (1/n) Σ max(0, 1 − y(w·x + b))` by
//! stochastic subgradient steps with step size `η_t = 1/(λ t)`. The returned
//! hyperplane is the average of the iterates over the final passes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mnist::CLASSES;
use crate::tensor::{gemm, lit, MatRef, Scalar, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"DSVM";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Return the mean iterate over this many final passes; 0 returns the last iterate.
    pub average_last: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 20,
            average_last: 10,
            seed: 42,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-class hyperplanes: `weights` is `[classes, features]`, `biases` is `[classes]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T: Scalar = f32> {
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
}

/// A single trained binary hyperplane.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryHyperplane {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryHyperplane {
    pub fn zero(features: usize) -> Self {
        BinaryHyperplane {
            weights: vec![0.0; features],
            bias: 0.0,
        }
    }

    pub fn score<T: Scalar>(&self, x: &[T]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot<T: Scalar>(w: &[f64], x: &[T]) -> f64 {
    w.iter()
        .zip(x)
        .map(|(&a, &b)| a * b.to_f64().unwrap_or(0.0))
        .sum()
}

/// `(λ/2)(‖w‖² + b²) + mean hinge` of one binary problem; `targets` are ±1.
pub fn hinge_objective<T: Scalar>(plane: &BinaryHyperplane, x: &Tensor<T>, targets: &[f64], lambda: f64) -> f64 {
    let norm_sq: f64 = plane.weights.iter().map(|w| w * w).sum::<f64>() + plane.bias * plane.bias;
    let hinge: f64 = (0..x.outer_len())
        .map(|i| (1.0 - targets[i] * plane.score(x.outer(i))).max(0.0))
        .sum();
    0.5 * lambda * norm_sq + hinge / x.outer_len() as f64
}

/// Pegasos on one binary problem.
///
/// The iterate is kept as `scale · (v, b)` so the per-step shrink
/// `w ← (1 − ηλ)w` costs O(1). The bias lives inside the scaled iterate;
/// stepping it at `1/(λt)` outside the shrink diverges for small `λ`.
pub fn train_binary<T: Scalar>(x: &Tensor<T>, targets: &[f64], cfg: &SvmConfig, seed: u64) -> Result<BinaryHyperplane> {
    cfg.validate()?;
    let n = x.outer_len();
    if n == 0 || targets.len() != n {
        return Err(Error::Domain(format!("{} targets for {n} samples", targets.len())));
    }
    let features = x.len() / n;
    let mut v = vec![0.0f64; features];
    let mut bias = 0.0f64;
    let mut scale = 1.0f64;
    let mut avg = BinaryHyperplane::zero(features);
    let mut averaged = 0u64;
    let average_from = cfg.epochs - cfg.average_last.min(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let xi = x.outer(i);
            let y = targets[i];
            let margin = y * scale * (dot(&v, xi) + bias);

            let shrink = 1.0 - eta * cfg.lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                bias = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for (w, &p) in v.iter_mut().zip(xi) {
                    *w += step * p.to_f64().unwrap_or(0.0);
                }
                bias += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                bias *= scale;
                scale = 1.0;
            }
            if epoch >= average_from {
                averaged += 1;
                let r = 1.0 / averaged as f64;
                for (a, &w) in avg.weights.iter_mut().zip(&v) {
                    *a += (scale * w - *a) * r;
                }
                avg.bias += (scale * bias - avg.bias) * r;
            }
        }
    }

    let plane = if averaged > 0 {
        avg
    } else {
        BinaryHyperplane {
            weights: v.into_iter().map(|w| w * scale).collect(),
            bias: bias * scale,
        }
    };
    if !plane.weights.iter().all(|w| w.is_finite()) || !plane.bias.is_finite() {
        return Err(Error::Numeric("SVM weights diverged".into()));
    }
    Ok(plane)
}

/// ±1 targets for the class-`k`-vs-rest problem.
pub fn ovr_targets(labels: &[u8], class: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l as usize == class { 1.0 } else { -1.0 })
        .collect()
}

/// Trains the ten class-vs-rest problems; class `k` shuffles with seed `seed + k`.
pub fn train_ovr<T: Scalar>(x: &Tensor<T>, labels: &[u8], cfg: &SvmConfig) -> Result<LinearModel<T>> {
    cfg.validate()?;
    let &[n, features] = x.dims() else {
        return Err(Error::Shape(format!("expected [n, features], got {:?}", x.dims())));
    };
    if labels.len() != n {
        return Err(Error::Domain(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::Domain(format!("label {bad} outside 0..{CLASSES}")));
    }
    let mut weights = Vec::with_capacity(CLASSES * features);
    let mut biases = Vec::with_capacity(CLASSES);
    for class in 0..CLASSES {
        let plane = train_binary(x, &ovr_targets(labels, class), cfg, cfg.seed.wrapping_add(class as u64))?;
        weights.extend(plane.weights.iter().map(|&w| lit::<T>(w)));
        biases.push(lit::<T>(plane.bias));
    }
    Ok(LinearModel {
        weights: Tensor::from_vec(&[CLASSES, features], weights)?,
        biases: Tensor::from_vec(&[CLASSES], biases)?,
    })
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(classes: usize, features: usize) -> Result<Self> {
        Ok(LinearModel {
            weights: Tensor::zeros(&[classes, features])?,
            biases: Tensor::zeros(&[classes])?,
        })
    }

    pub fn classes(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn features(&self) -> usize {
        self.weights.dims()[1]
    }

    /// `scores[i][k] = w_k · x_i + b_k`.
    pub fn decision_scores(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, features] = x.dims() else {
            return Err(Error::Shape(format!("expected [n, features], got {:?}", x.dims())));
        };
        if features != self.features() {
            return Err(Error::Shape(format!(
                "model has {} features, input has {features}",
                self.features()
            )));
        }
        let classes = self.classes();
        let mut out: Vec<T> = (0..n).flat_map(|_| self.biases.data().iter().copied()).collect();
        gemm(
            MatRef::row_major(x.data(), n, features),
            MatRef::transposed(self.weights.data(), features, classes),
            &mut out,
            true,
        );
        Ok(Tensor::from_parts(Shape::new(&[n, classes])?, out))
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        self.decision_scores(x)?.argmax_rows()
    }

    /// `DSVM`, version byte, then weights and biases as little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * (self.weights.len() + self.biases.len()));
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        for v in self.weights.data().iter().chain(self.biases.data()) {
            out.extend_from_slice(&v.to_f32().unwrap_or(0.0).to_le_bytes());
        }
        out
    }

    /// Decodes a `DSVM` blob for the 10-class, 784-feature MNIST layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_bytes_with(bytes, CLASSES, crate::mnist::PIXELS)
    }

    pub fn from_bytes_with(bytes: &[u8], classes: usize, features: usize) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing DSVM magic".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported DSVM version {}", bytes[4])));
        }
        let expected = 5 + 4 * (classes * features + classes);
        if bytes.len() != expected {
            return Err(Error::Length {
                expected,
                found: bytes.len(),
            });
        }
        let mut values = bytes[5..]
            .chunks_exact(4)
            .map(|c| lit::<T>(f32::from_le_bytes(c.try_into().expect("four bytes")) as f64));
        let weights: Vec<T> = values.by_ref().take(classes * features).collect();
        let biases: Vec<T> = values.collect();
        Ok(LinearModel {
            weights: Tensor::from_vec(&[classes, features], weights)?,
            biases: Tensor::from_vec(&[classes], biases)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
