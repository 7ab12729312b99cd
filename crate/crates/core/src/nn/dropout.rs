use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::tensor::{Element, Tensor};

/// Per-element multipliers applied by a train-mode dropout: `0` for dropped
/// elements, `1 / (1 - rate)` for survivors. `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask<T>(pub Option<Vec<T>>);

/// Inverted dropout. The mask is drawn sequentially from `rng` so a seeded
/// generator reproduces it exactly.
pub fn dropout_forward<T: Element, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), DropoutMask(None)));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), data)?, DropoutMask(Some(mask))))
}

pub fn dropout_backward<T: Element>(mask: &DropoutMask<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    match &mask.0 {
        None => Ok(grad_out.clone()),
        Some(m) => {
            if m.len() != grad_out.len() {
                return Err(Error::ShapeMismatch("dropout mask/gradient length".into()));
            }
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(grad_out.shape(), data)
        }
    }
}
