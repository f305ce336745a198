use super::Sequential;
use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar};

/// One momentum step: `v ← μv − ηg`, `θ ← θ + v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "parameter/gradient/velocity lengths differ: {}/{}/{}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let (eta, mu) = (lit::<T>(learning_rate), lit::<T>(momentum));
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - eta * g;
        *p += *v;
    }
    Ok(())
}

/// SGD with classical momentum, holding one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T: Scalar> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be non-negative, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Domain(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(SgdMomentum {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn step(&mut self, stack: &mut Sequential<T>) -> Result<()> {
        let pairs = stack.parameters_and_gradients();
        if self.velocity.is_empty() {
            self.velocity = pairs.iter().map(|(p, _)| vec![T::zero(); p.len()]).collect();
        }
        if self.velocity.len() != pairs.len() {
            return Err(Error::Shape("optimizer state does not match the stack".into()));
        }
        for ((param, grad), velocity) in pairs.into_iter().zip(&mut self.velocity) {
            sgd_momentum_step(param.data_mut(), grad.data(), velocity, self.learning_rate, self.momentum)?;
        }
        Ok(())
    }
}
