use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Channel concatenation; `a`'s channels come first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::ShapeMismatch(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..na {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor::from_vec([na, ca + cb, ha, wa], data)
}

/// Inverse of [`concat_channels`]: the first `at` channels and the rest.
pub fn split_channels<T: Element>(x: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = x.shape();
    if at == 0 || at >= c {
        return Err(Error::ShapeMismatch(format!("cannot split {c} channels at {at}")));
    }
    let hw = h * w;
    let mut a = Vec::with_capacity(n * at * hw);
    let mut b = Vec::with_capacity(n * (c - at) * hw);
    for s in 0..n {
        let (l, r) = x.sample(s).split_at(at * hw);
        a.extend_from_slice(l);
        b.extend_from_slice(r);
    }
    Ok((Tensor::from_vec([n, at, h, w], a)?, Tensor::from_vec([n, c - at, h, w], b)?))
}

/// Routes the upstream slices back to each operand unchanged.
pub fn concat_backward<T: Element>(a_channels: usize, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    split_channels(grad_out, a_channels)
}
