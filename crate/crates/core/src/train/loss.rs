use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over every pixel, and its gradient with respect
/// to `pred`. The gradient is that of the clamped expression, so it is zero
/// wherever the clamp is active.
pub fn bce_loss<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let (p, y) = (p.as_f64(), y.as_f64());
            let pc = p.clamp(lo, hi);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            if p < lo || p > hi {
                T::zero()
            } else {
                T::from_f64((-y / pc + (1.0 - y) / (1.0 - pc)) / n)
            }
        })
        .collect();
    Ok((loss / n, Tensor::from_vec(pred.shape(), grad)?))
}
