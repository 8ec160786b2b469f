use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

pub const PRED_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over a batch plus `l2 · Σ w²` over the
/// weight-decay parameters (conv and dense weights; BN gains/shifts and
/// biases excluded). Predictions are clamped to [1e-7, 1−1e-7]; the
/// gradient is zero on clamped entries.
pub fn bce_loss<T: Scalar>(
    pred: &Tensor<T>,
    label: &Tensor<T>,
    params: &[&Param<T>],
    l2: f64,
) -> Result<(f64, Tensor<T>)> {
    if pred.shape != label.shape {
        return Err(Error::Shape("prediction and label shapes differ".into()));
    }
    if label.data.iter().any(|&y| {
        let v = y.as_f64();
        v != 0.0 && v != 1.0
    }) {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    let n = pred.len();
    if n == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let lo = PRED_CLAMP;
    let hi = 1.0 - PRED_CLAMP;
    let mut loss = 0.0f64;
    let mut grad = vec![T::zero(); n];
    for i in 0..n {
        let raw = pred.data[i].as_f64();
        let p = raw.clamp(lo, hi);
        let y = label.data[i].as_f64();
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        // clamped predictions sit on a flat segment of the surrogate
        if raw > lo && raw < hi {
            grad[i] = T::from_f64((-y / p + (1.0 - y) / (1.0 - p)) / n as f64);
        }
    }
    loss /= n as f64;
    if l2 > 0.0 {
        let penalty: f64 = params
            .iter()
            .filter(|p| p.weight_decay)
            .map(|p| p.data.data.iter().map(|w| w.as_f64() * w.as_f64()).sum::<f64>())
            .sum();
        loss += l2 * penalty;
    }
    Ok((loss, Tensor::new(pred.shape.clone(), grad)?))
}

/// Add the gradient of the `l2 · Σ w²` penalty onto the parameter grads.
pub fn apply_l2_grad<T: Scalar>(params: &mut [&mut Param<T>], l2: f64) {
    if l2 == 0.0 {
        return;
    }
    let two_l2 = T::from_f64(2.0 * l2);
    for p in params.iter_mut().filter(|p| p.weight_decay) {
        for (g, &w) in p.grad.data.iter_mut().zip(&p.data.data) {
            *g = *g + two_l2 * w;
        }
    }
}
