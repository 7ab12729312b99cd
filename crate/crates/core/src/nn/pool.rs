use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::{Element, Tensor};

/// 2x2 max pooling, stride 2. Also returns, for every output element, the
/// flat index of the input element that won its window (first in row-major
/// order on ties).
pub fn maxpool2x2_forward<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddSpatialDim { height: h, width: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let xd = x.data();
    exec::for_each_chunk_pair_mut(out.data_mut(), oh * ow, &mut argmax, oh * ow, |p, o, a| {
        let base = p * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * w + 2 * xx;
                for cand in [best + 1, best + w, best + w + 1] {
                    if xd[cand] > xd[best] {
                        best = cand;
                    }
                }
                o[y * ow + xx] = xd[best];
                a[y * ow + xx] = best;
            }
        }
    });
    Ok((out, argmax))
}

pub fn maxpool2x2_backward<T: Element>(input_shape: [usize; 4], argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    grad_out.ensure_shape([n, c, h / 2, w / 2], "maxpool upstream gradient")?;
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] = d[i] + g;
    }
    Ok(dx)
}

/// Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block.
pub fn upsample_nearest2x_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let xd = x.data();
    exec::for_each_chunk_mut(out.data_mut(), oh * ow, |p, o| {
        let src = &xd[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            let row = &src[(y / 2) * w..(y / 2 + 1) * w];
            for (xx, v) in o[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *v = row[xx / 2];
            }
        }
    });
    out
}

pub fn upsample_nearest2x_backward<T: Element>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, oh, ow] = grad_out.shape();
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(Error::OddSpatialDim { height: oh, width: ow });
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let g = grad_out.data();
    exec::for_each_chunk_mut(dx.data_mut(), h * w, |p, d| {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * ow + 2 * x;
                d[y * w + x] = src[i] + src[i + 1] + src[i + ow] + src[i + ow + 1];
            }
        }
    });
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full([2, 3, 4, 6], 1.25);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor::<f64>::zeros([1, 1, 3, 4]);
        assert!(matches!(maxpool2x2_forward(&x), Err(Error::OddSpatialDim { height: 3, width: 4 })));
    }

    #[test]
    fn brute_force_window_max() {
        let x = Tensor::<f64>::from_fn([2, 2, 4, 4], |[b, c, y, x]| ((b * 37 + c * 19 + y * 11 + x * 7) % 23) as f64);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        for b in 0..2 {
            for c in 0..2 {
                for oy in 0..2 {
                    for ox in 0..2 {
                        let m = (0..4)
                            .map(|i| x.get([b, c, 2 * oy + i / 2, 2 * ox + i % 2]))
                            .fold(f64::MIN, f64::max);
                        assert_eq!(y.get([b, c, oy, ox]), m);
                    }
                }
            }
        }
    }

    #[test]
    fn upsample_blocks() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(upsample_nearest2x_forward(&x).data(), &[1.0; 4]);
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest2x_forward(&x);
        for yy in 0..4 {
            for xx in 0..4 {
                assert_eq!(y.get([0, 0, yy, xx]), x.get([0, 0, yy / 2, xx / 2]));
            }
        }
    }

    #[test]
    fn pool_inverts_upsample() {
        let x = Tensor::<f64>::from_fn([2, 3, 3, 5], |[b, c, y, x]| (b * 100 + c * 10 + y * 5 + x) as f64 * -0.7);
        let (back, _) = maxpool2x2_forward(&upsample_nearest2x_forward(&x)).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 5.0, 3.0, 4.0]).unwrap();
        let (_, idx) = maxpool2x2_forward(&x).unwrap();
        let g = Tensor::full([1, 1, 1, 1], 2.0);
        let dx = maxpool2x2_backward(x.shape(), &idx, &g).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }
}
