use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{Kernel, KernelGrads};
use crate::tensor::{gemm, Element, Mat, Tensor};

fn check(x: &Tensor<impl Element>, k: &Kernel<'_, impl Element>) -> Result<()> {
    if k.size != 2 {
        return Err(Error::ShapeMismatch(format!("transposed conv needs a 2x2 kernel, got {}", k.size)));
    }
    if x.channels() != k.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv expects {} input channels, got {}",
            k.in_channels,
            x.channels()
        )));
    }
    if k.weight.len() != k.in_channels * k.out_channels * 4 || k.bias.len() != k.out_channels {
        return Err(Error::ShapeMismatch("transposed conv weight/bias length".into()));
    }
    Ok(())
}

/// 2x2, stride-2 transposed convolution: every input pixel expands into a
/// non-overlapping 2x2 output block. Weight layout is `(in, out, 2, 2)`.
pub fn conv_transpose2x_forward<T: Element>(x: &Tensor<T>, kernel: Kernel<'_, T>) -> Result<Tensor<T>> {
    check(x, &kernel)?;
    let [n, ci, h, w] = x.shape();
    let co = kernel.out_channels;
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let kmat = Mat::dense(kernel.weight, ci, co * 4);
    let mut out = Tensor::zeros([n, co, oh, ow]);
    exec::for_each_chunk_mut(out.data_mut(), co * oh * ow, |b, out_n| {
        // rows of `cols` are (out channel, ky, kx), columns are input pixels
        let mut cols = vec![T::zero(); co * 4 * hw];
        gemm(T::one(), kmat.t(), Mat::dense(x.sample(b), ci, hw), T::zero(), &mut cols, hw);
        for o in 0..co {
            let plane = &mut out_n[o * oh * ow..(o + 1) * oh * ow];
            let bias = kernel.bias[o];
            for ky in 0..2 {
                for kx in 0..2 {
                    let row = &cols[(o * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        let dst = &mut plane[(2 * y + ky) * ow..];
                        for x in 0..w {
                            dst[2 * x + kx] = row[y * w + x] + bias;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

pub fn conv_transpose2x_backward<T: Element>(
    x: &Tensor<T>,
    kernel: Kernel<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<KernelGrads<T>> {
    check(x, &kernel)?;
    let [n, ci, h, w] = x.shape();
    let co = kernel.out_channels;
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    grad_out.ensure_shape([n, co, oh, ow], "transposed conv upstream gradient")?;
    let kmat = Mat::dense(kernel.weight, ci, co * 4);

    let mut dx = Tensor::zeros(x.shape());
    let mut per_sample: Vec<Option<(Vec<T>, Vec<T>)>> = (0..n).map(|_| None).collect();
    exec::for_each_chunk_pair_mut(dx.data_mut(), ci * hw, &mut per_sample, 1, |b, dx_n, slot| {
        let g_n = grad_out.sample(b);
        let mut cols = vec![T::zero(); co * 4 * hw];
        let mut db = vec![T::zero(); co];
        for o in 0..co {
            let plane = &g_n[o * oh * ow..(o + 1) * oh * ow];
            db[o] = plane.iter().copied().sum();
            for ky in 0..2 {
                for kx in 0..2 {
                    let row = &mut cols[(o * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        let src = &plane[(2 * y + ky) * ow..];
                        for x in 0..w {
                            row[y * w + x] = src[2 * x + kx];
                        }
                    }
                }
            }
        }
        let gmat = Mat::dense(&cols, co * 4, hw);
        gemm(T::one(), kmat, gmat, T::zero(), dx_n, hw);
        let mut dk = vec![T::zero(); ci * co * 4];
        gemm(T::one(), Mat::dense(x.sample(b), ci, hw), gmat.t(), T::zero(), &mut dk, co * 4);
        slot[0] = Some((dk, db));
    });

    let mut weight = vec![T::zero(); ci * co * 4];
    let mut bias = vec![T::zero(); co];
    for (dk, db) in per_sample.into_iter().map(|p| p.expect("every sample visited")) {
        weight.iter_mut().zip(dk).for_each(|(a, b)| *a = *a + b);
        bias.iter_mut().zip(db).for_each(|(a, b)| *a = *a + b);
    }
    Ok(KernelGrads { input: dx, weight, bias })
}
