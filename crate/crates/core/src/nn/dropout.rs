use rand::{Rng, RngCore};

use super::missing_cache;
use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Tensor};

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1 − rate)`; evaluation is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<T: Scalar> {
    pub rate: f64,
    pub(crate) mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate, mask: None })
    }

    pub(crate) fn forward_train(&mut self, x: &Tensor<T>, rng: &mut dyn RngCore) -> Tensor<T> {
        if self.rate == 0.0 {
            self.mask = Some(vec![T::one(); x.len()]);
            return x.clone();
        }
        let keep = lit::<T>(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < self.rate { T::zero() } else { keep })
            .collect();
        let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_parts(x.shape().clone(), out)
    }

    pub(crate) fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("dropout"))?;
        if mask.len() != grad.len() {
            return Err(Error::Shape(format!(
                "dropout gradient has {} elements, mask has {}",
                grad.len(),
                mask.len()
            )));
        }
        let data = grad.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
        Ok(Tensor::from_parts(grad.shape().clone(), data))
    }
}

/// Free-function form over an explicit mode.
pub fn dropout_forward<T: Scalar>(x: &Tensor<T>, rate: f64, mode: super::Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
    let mut layer = Dropout::new(rate)?;
    match mode {
        super::Mode::Eval => Ok(x.clone()),
        super::Mode::Train => Ok(layer.forward_train(x, rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::Mode;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f64>::from_fn(&[4, 5], |i| i as f64).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(dropout_forward(&x, 0.0, mode, &mut rng).unwrap(), x);
        }
    }

    #[test]
    fn eval_is_identity_and_consumes_no_randomness() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = rng.clone();
        let x = Tensor::<f32>::from_fn(&[3, 3], |i| i as f32).unwrap();
        assert_eq!(dropout_forward(&x, 0.5, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(rng, before);
    }

    #[test]
    fn train_mean_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::full(&[1_000_000], 1.0).unwrap();
        let out = dropout_forward(&x, 0.25, Mode::Train, &mut rng).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / out.len() as f64;
        assert!((zeros - 0.25).abs() < 0.005, "drop fraction {zeros}");
    }

    #[test]
    fn invalid_rate_rejected() {
        assert!(Dropout::<f32>::new(1.0).is_err());
        assert!(Dropout::<f32>::new(-0.1).is_err());
    }
}
