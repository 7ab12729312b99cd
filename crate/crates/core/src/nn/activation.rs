use crate::error::Result;
use crate::exec;
use crate::tensor::{Element, Tensor};

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient routed through positive inputs only.
pub fn relu_backward<T: Element>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape(x.shape(), "relu upstream gradient")?;
    let data = x.data().iter().zip(grad_out.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Logistic function, evaluated without overflow for any finite input and
/// kept strictly inside (0, 1) even where the exact value rounds to 0 or 1.
pub fn sigmoid<T: Element>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / T::from_f64(2.0);
    s.max(T::min_positive_value()).min(hi)
}

pub fn sigmoid_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let chunk = x.sample_len();
    exec::for_each_chunk_mut(out.data_mut(), chunk, |_, c| c.iter_mut().for_each(|v| *v = sigmoid(*v)));
    out
}

/// Backward from the forward *output* `s`: `g * s * (1 - s)`.
pub fn sigmoid_backward<T: Element>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape(output.shape(), "sigmoid upstream gradient")?;
    let data = output.data().iter().zip(grad_out.data()).map(|(&s, &g)| g * s * (T::one() - s)).collect();
    Tensor::from_vec(output.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(0.0f32), 0.5);
        let hi = sigmoid(50.0f64);
        let lo = sigmoid(-50.0f64);
        assert!((1.0 - hi).abs() < 1e-15 && hi < 1.0);
        assert!(lo.abs() < 1e-15 && lo > 0.0);
        for v in [-1e4f32, -100.0, -20.0, 20.0, 100.0, 1e4] {
            let s = sigmoid(v);
            assert!(s > 0.0 && s < 1.0, "{v} -> {s}");
        }
    }
}
