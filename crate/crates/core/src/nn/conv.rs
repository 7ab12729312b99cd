use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{Kernel, KernelGrads};
use crate::tensor::{gemm, Element, Mat, Tensor};

/// Upper bound on im2col buffer elements per sample; rows are tiled to fit.
const COL_BUDGET: usize = 1 << 22;

fn check(x: &Tensor<impl Element>, k: &Kernel<'_, impl Element>) -> Result<()> {
    if k.size != 1 && k.size != 3 {
        return Err(Error::ShapeMismatch(format!("unsupported kernel size {}", k.size)));
    }
    if x.channels() != k.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            k.in_channels,
            x.channels()
        )));
    }
    let wlen = k.out_channels * k.in_channels * k.size * k.size;
    if k.weight.len() != wlen || k.bias.len() != k.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv weight/bias lengths {}/{} do not match ({}, {}, {k2}, {k2})",
            k.weight.len(),
            k.bias.len(),
            k.out_channels,
            k.in_channels,
            k2 = k.size
        )));
    }
    Ok(())
}

fn tile_rows(ckk: usize, h: usize, w: usize) -> usize {
    (COL_BUDGET / (ckk * w).max(1)).clamp(1, h)
}

/// Unfold rows `y0..y1` of one sample into a `(c*k*k, (y1-y0)*w)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Element>(x: &[T], c: usize, h: usize, w: usize, k: usize, y0: usize, y1: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let ncols = (y1 - y0) * w;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ch * k + ky) * k + kx) * ncols..][..ncols];
                let dx = kx as isize - pad;
                for (ty, y) in (y0..y1).enumerate() {
                    let sy = y as isize + ky as isize - pad;
                    let dst = &mut row[ty * w..(ty + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *d = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back into image layout.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Element>(col: &[T], c: usize, h: usize, w: usize, k: usize, y0: usize, y1: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let ncols = (y1 - y0) * w;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ch * k + ky) * k + kx) * ncols..][..ncols];
                let ox = kx as isize - pad;
                for (ty, y) in (y0..y1).enumerate() {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, &v) in row[ty * w..(ty + 1) * w].iter().enumerate() {
                        let sx = x as isize + ox;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] = dst[sx as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 "same" cross-correlation for 1x1 and 3x3 kernels.
pub fn conv2d_forward<T: Element>(x: &Tensor<T>, kernel: Kernel<'_, T>) -> Result<Tensor<T>> {
    check(x, &kernel)?;
    let [n, c, h, w] = x.shape();
    let (co, k) = (kernel.out_channels, kernel.size);
    let ckk = c * k * k;
    let hw = h * w;
    let mut out = Tensor::zeros([n, co, h, w]);
    let wmat = Mat::dense(kernel.weight, co, ckk);
    exec::for_each_chunk_mut(out.data_mut(), co * hw, |b, out_n| {
        let x_n = x.sample(b);
        for (plane, &bias) in out_n.chunks_mut(hw).zip(kernel.bias) {
            plane.fill(bias);
        }
        if k == 1 {
            gemm(T::one(), wmat, Mat::dense(x_n, c, hw), T::one(), out_n, hw);
            return;
        }
        let rows = tile_rows(ckk, h, w);
        let mut col = vec![T::zero(); ckk * rows * w];
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let ncols = (y1 - y0) * w;
            let col = &mut col[..ckk * ncols];
            im2col(x_n, c, h, w, k, y0, y1, col);
            gemm(T::one(), wmat, Mat::dense(col, ckk, ncols), T::one(), &mut out_n[y0 * w..], hw);
            y0 = y1;
        }
    });
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Element>(x: &Tensor<T>, kernel: Kernel<'_, T>, grad_out: &Tensor<T>) -> Result<KernelGrads<T>> {
    check(x, &kernel)?;
    let [n, c, h, w] = x.shape();
    let (co, k) = (kernel.out_channels, kernel.size);
    grad_out.ensure_shape([n, co, h, w], "conv upstream gradient")?;
    let ckk = c * k * k;
    let hw = h * w;
    let wmat = Mat::dense(kernel.weight, co, ckk);

    let mut dx = Tensor::zeros(x.shape());
    let partials: Vec<(Vec<T>, Vec<T>)> = {
        let mut per_sample: Vec<Option<(Vec<T>, Vec<T>)>> = (0..n).map(|_| None).collect();
        exec::for_each_chunk_pair_mut(dx.data_mut(), c * hw, &mut per_sample, 1, |b, dx_n, slot| {
            let x_n = x.sample(b);
            let g_n = grad_out.sample(b);
            let mut dw = vec![T::zero(); co * ckk];
            let db: Vec<T> = g_n.chunks(hw).map(|p| p.iter().copied().sum()).collect();
            let gmat = Mat::dense(g_n, co, hw);
            if k == 1 {
                gemm(T::one(), gmat, Mat::dense(x_n, c, hw).t(), T::zero(), &mut dw, ckk);
                gemm(T::one(), wmat.t(), gmat, T::zero(), dx_n, hw);
            } else {
                let rows = tile_rows(ckk, h, w);
                let mut col = vec![T::zero(); ckk * rows * w];
                let mut dcol = vec![T::zero(); ckk * rows * w];
                let mut y0 = 0;
                while y0 < h {
                    let y1 = (y0 + rows).min(h);
                    let ncols = (y1 - y0) * w;
                    let col = &mut col[..ckk * ncols];
                    let dcol = &mut dcol[..ckk * ncols];
                    im2col(x_n, c, h, w, k, y0, y1, col);
                    let gtile = Mat { data: &g_n[y0 * w..], rows: co, cols: ncols, rs: hw, cs: 1 };
                    gemm(T::one(), gtile, Mat::dense(col, ckk, ncols).t(), T::one(), &mut dw, ckk);
                    gemm(T::one(), wmat.t(), gtile, T::zero(), dcol, ncols);
                    col2im(dcol, c, h, w, k, y0, y1, dx_n);
                    y0 = y1;
                }
            }
            slot[0] = Some((dw, db));
        });
        per_sample.into_iter().map(|p| p.expect("every sample visited")).collect()
    };

    let mut weight = vec![T::zero(); co * ckk];
    let mut bias = vec![T::zero(); co];
    for (dw, db) in partials {
        weight.iter_mut().zip(dw).for_each(|(a, b)| *a = *a + b);
        bias.iter_mut().zip(db).for_each(|(a, b)| *a = *a + b);
    }
    Ok(KernelGrads { input: dx, weight, bias })
}
