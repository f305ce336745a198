use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Tensor};

fn rows<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.dims() {
        [n, c] => Ok((n, c)),
        _ => Err(Error::Shape(format!("expected [n, classes], got {:?}", t.dims()))),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, classes) = rows(logits)?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(Tensor::from_parts(logits.shape().clone(), out))
}

/// Mean cross-entropy of `softmax(logits)` against one-hot targets, and its
/// gradient w.r.t. the logits, `(softmax − one_hot)/n`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, one_hot: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let (n, classes) = rows(logits)?;
    if one_hot.dims() != logits.dims() {
        return Err(Error::Shape(format!(
            "targets {:?} do not match logits {:?}",
            one_hot.dims(),
            logits.dims()
        )));
    }
    let inv_n = lit::<T>(1.0 / n as f64);
    let mut grad = Vec::with_capacity(logits.len());
    let mut total = 0.0f64;
    for (z, y) in logits.data().chunks_exact(classes).zip(one_hot.data().chunks_exact(classes)) {
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: f64 = z.iter().map(|&v| (v - max).to_f64().unwrap_or(0.0).exp()).sum();
        let log_sum = sum.ln();
        for (&zj, &yj) in z.iter().zip(y) {
            let shifted = (zj - max).to_f64().unwrap_or(0.0);
            let yj64 = yj.to_f64().unwrap_or(0.0);
            if yj64 != 0.0 {
                total -= yj64 * (shifted - log_sum);
            }
            let p = (shifted - log_sum).exp();
            grad.push((lit::<T>(p) - yj) * inv_n);
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    Ok((loss, Tensor::from_parts(logits.shape().clone(), grad)))
}
