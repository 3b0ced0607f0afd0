use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mean softmax cross-entropy over the batch and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    if logits.shape().len() != 2 || logits.dim(0) != targets.len() {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("logits {:?} vs {} targets", logits.shape(), targets.len()),
        ));
    }
    let (batch, k) = (logits.dim(0), logits.dim(1));
    if k < 2 {
        return Err(Error::InvalidArgument("cross-entropy needs at least two classes".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidArgument(format!("target class {bad} outside [0, {k})")));
    }
    let inv_b = T::one() / T::of_usize(batch);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(&[batch, k]);
    for (b, &t) in targets.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        let g = &mut grad.data_mut()[b * k..(b + 1) * k];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_b;
        }
        g[t] -= inv_b;
    }
    Ok((loss * inv_b, grad))
}

/// Mean squared error over all elements and its gradient `2 (pred - target) / N`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "mse_loss",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of empty tensors".into()));
    }
    let n = T::of_usize(pred.len());
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let r = p - t;
        loss += r * r;
        *g = two * r / n;
    }
    Ok((loss / n, grad))
}
