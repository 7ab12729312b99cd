//! Central finite-difference checks of every layer's backward pass.
//!
//! Each layer is reduced to the scalar `sum(w * forward(x))` with fixed random
//! weights `w`, so the analytic gradient is `backward(grad_out = w)`. Errors
//! are reported as `|fd - analytic| / max(|fd|, |analytic|)` over the whole
//! gradient vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segunet::nn::{self, BatchNormParams, Kernel, Mode};
use segunet::train::bce_loss;
use segunet::{Element, Tensor};

pub struct Check {
    pub layer: &'static str,
    pub wrt: &'static str,
    pub rel_err: f64,
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-30)
}

/// Central differences of `f` at `x`, dividing by the step actually
/// representable in `T`.
fn numeric<T: Element>(x: &[T], h: f64, f: &dyn Fn(&[T]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = x[i];
            buf[i] = x0 + T::from_f64(h);
            let up = buf[i];
            let fp = f(&buf);
            buf[i] = x0 - T::from_f64(h);
            let down = buf[i];
            let fm = f(&buf);
            buf[i] = x0;
            (fp - fm) / (up - down).as_f64()
        })
        .collect()
}

fn dot<T: Element>(w: &[T], y: &Tensor<T>) -> f64 {
    w.iter().zip(y.data()).map(|(a, b)| a.as_f64() * b.as_f64()).sum()
}

fn as64<T: Element>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn random<T: Element>(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<T> {
    (0..n).map(|_| T::from_f64(rng.random_range(lo..hi))).collect()
}

/// Values in `[-hi, -gap] U [gap, hi]`, away from the ReLU kink.
fn away_from_zero<T: Element>(rng: &mut ChaCha8Rng, n: usize, gap: f64, hi: f64) -> Vec<T> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..hi);
            T::from_f64(if rng.random_bool(0.5) { m } else { -m })
        })
        .collect()
}

fn tensor<T: Element>(shape: [usize; 4], data: Vec<T>) -> Tensor<T> {
    Tensor::from_vec(shape, data).unwrap()
}

fn conv_checks<T: Element>(rng: &mut ChaCha8Rng, size: usize, h: f64, out: &mut Vec<Check>) {
    let (ci, co) = (4, 3);
    let xs = [2, ci, 8, 8];
    let x: Vec<T> = random(rng, 2 * ci * 64, -1.0, 1.0);
    let wgt: Vec<T> = random(rng, co * ci * size * size, -0.5, 0.5);
    let bias: Vec<T> = random(rng, co, -0.5, 0.5);
    let w: Vec<T> = random(rng, 2 * co * 64, -1.0, 1.0);
    let layer = if size == 3 { "conv3x3" } else { "conv1x1" };
    let k = |wt: &[T], b: &[T]| -> (Vec<T>, Vec<T>) { (wt.to_vec(), b.to_vec()) };
    let fwd = |x: &[T], wt: &[T], b: &[T]| -> f64 {
        let (wt, b) = k(wt, b);
        let kern = Kernel { weight: &wt, bias: &b, in_channels: ci, out_channels: co, size };
        dot(&w, &nn::conv2d_forward(&tensor(xs, x.to_vec()), kern).unwrap())
    };
    let kern = Kernel { weight: &wgt, bias: &bias, in_channels: ci, out_channels: co, size };
    let g = nn::conv2d_backward(&tensor(xs, x.clone()), kern, &tensor([2, co, 8, 8], w.clone())).unwrap();
    let nx = numeric(&x, h, &|v| fwd(v, &wgt, &bias));
    let nw = numeric(&wgt, h, &|v| fwd(&x, v, &bias));
    let nb = numeric(&bias, h, &|v| fwd(&x, &wgt, v));
    out.push(Check { layer, wrt: "input", rel_err: rel_err(&nx, &as64(g.input.data())) });
    out.push(Check { layer, wrt: "weight", rel_err: rel_err(&nw, &as64(&g.weight)) });
    out.push(Check { layer, wrt: "bias", rel_err: rel_err(&nb, &as64(&g.bias)) });
}

fn conv_transpose_checks<T: Element>(rng: &mut ChaCha8Rng, h: f64, out: &mut Vec<Check>) {
    let (ci, co) = (4, 3);
    let xs = [2, ci, 4, 4];
    let x: Vec<T> = random(rng, 2 * ci * 16, -1.0, 1.0);
    let wgt: Vec<T> = random(rng, ci * co * 4, -0.5, 0.5);
    let bias: Vec<T> = random(rng, co, -0.5, 0.5);
    let w: Vec<T> = random(rng, 2 * co * 64, -1.0, 1.0);
    let fwd = |x: &[T], wt: &[T], b: &[T]| -> f64 {
        let kern = Kernel { weight: wt, bias: b, in_channels: ci, out_channels: co, size: 2 };
        dot(&w, &nn::conv_transpose2x_forward(&tensor(xs, x.to_vec()), kern).unwrap())
    };
    let kern = Kernel { weight: &wgt, bias: &bias, in_channels: ci, out_channels: co, size: 2 };
    let g = nn::conv_transpose2x_backward(&tensor(xs, x.clone()), kern, &tensor([2, co, 8, 8], w.clone())).unwrap();
    let nx = numeric(&x, h, &|v| fwd(v, &wgt, &bias));
    let nw = numeric(&wgt, h, &|v| fwd(&x, v, &bias));
    let nb = numeric(&bias, h, &|v| fwd(&x, &wgt, v));
    let layer = "conv_transpose2x";
    out.push(Check { layer, wrt: "input", rel_err: rel_err(&nx, &as64(g.input.data())) });
    out.push(Check { layer, wrt: "weight", rel_err: rel_err(&nw, &as64(&g.weight)) });
    out.push(Check { layer, wrt: "bias", rel_err: rel_err(&nb, &as64(&g.bias)) });
}

fn batchnorm_checks<T: Element>(rng: &mut ChaCha8Rng, h: f64, out: &mut Vec<Check>) {
    let c = 4;
    let xs = [2, c, 8, 8];
    let x: Vec<T> = random(rng, 2 * c * 64, -2.0, 2.0);
    let gamma: Vec<T> = random(rng, c, 0.5, 1.5);
    let beta: Vec<T> = random(rng, c, -0.5, 0.5);
    let w: Vec<T> = random(rng, 2 * c * 64, -1.0, 1.0);
    let zeros = vec![T::zero(); c];
    let ones = vec![T::one(); c];
    let params = |g: &[T], b: &[T]| -> (Vec<T>, Vec<T>) { (g.to_vec(), b.to_vec()) };
    let fwd = |x: &[T], g: &[T], b: &[T]| -> f64 {
        let (g, b) = params(g, b);
        let p = BatchNormParams { gamma: &g, beta: &b, running_mean: &zeros, running_var: &ones, eps: 1e-5, momentum: 0.99 };
        dot(&w, &nn::batchnorm_forward(&tensor(xs, x.to_vec()), p, Mode::Train).unwrap().output)
    };
    let p = BatchNormParams { gamma: &gamma, beta: &beta, running_mean: &zeros, running_var: &ones, eps: 1e-5, momentum: 0.99 };
    let fo = nn::batchnorm_forward(&tensor(xs, x.clone()), p, Mode::Train).unwrap();
    let (dx, dg, db) = nn::batchnorm_backward(&fo.cache, &gamma, &tensor(xs, w.clone())).unwrap();
    let nx = numeric(&x, h, &|v| fwd(v, &gamma, &beta));
    let ng = numeric(&gamma, h, &|v| fwd(&x, v, &beta));
    let nb = numeric(&beta, h, &|v| fwd(&x, &gamma, v));
    let layer = "batchnorm_train";
    out.push(Check { layer, wrt: "input", rel_err: rel_err(&nx, &as64(dx.data())) });
    out.push(Check { layer, wrt: "gamma", rel_err: rel_err(&ng, &as64(&dg)) });
    out.push(Check { layer, wrt: "beta", rel_err: rel_err(&nb, &as64(&db)) });
}

fn elementwise_checks<T: Element>(rng: &mut ChaCha8Rng, h: f64, out: &mut Vec<Check>) {
    let xs = [2, 4, 8, 8];
    let n = 2 * 4 * 64;
    let w: Vec<T> = random(rng, n, -1.0, 1.0);
    let wt = tensor(xs, w.clone());

    let x: Vec<T> = away_from_zero(rng, n, 0.1, 2.0);
    let g = nn::relu_backward(&tensor(xs, x.clone()), &wt).unwrap();
    let nx = numeric(&x, h.min(0.05), &|v| dot(&w, &nn::relu_forward(&tensor(xs, v.to_vec()))));
    out.push(Check { layer: "relu", wrt: "input", rel_err: rel_err(&nx, &as64(g.data())) });

    let x: Vec<T> = random(rng, n, -3.0, 3.0);
    let y = nn::sigmoid_forward(&tensor(xs, x.clone()));
    let g = nn::sigmoid_backward(&y, &wt).unwrap();
    let nx = numeric(&x, h, &|v| dot(&w, &nn::sigmoid_forward(&tensor(xs, v.to_vec()))));
    out.push(Check { layer: "sigmoid", wrt: "input", rel_err: rel_err(&nx, &as64(g.data())) });

    let a: Vec<T> = random(rng, 2 * 2 * 64, -1.0, 1.0);
    let b: Vec<T> = random(rng, 2 * 2 * 64, -1.0, 1.0);
    let (sa, sb) = ([2, 2, 8, 8], [2, 2, 8, 8]);
    let (ga, gb) = nn::concat_backward(2, &wt).unwrap();
    let cat = |a: &[T], b: &[T]| dot(&w, &nn::concat_channels(&tensor(sa, a.to_vec()), &tensor(sb, b.to_vec())).unwrap());
    let na = numeric(&a, h, &|v| cat(v, &b));
    let nb = numeric(&b, h, &|v| cat(&a, v));
    out.push(Check { layer: "concat", wrt: "first", rel_err: rel_err(&na, &as64(ga.data())) });
    out.push(Check { layer: "concat", wrt: "second", rel_err: rel_err(&nb, &as64(gb.data())) });

    // distinct values so the pooling argmax is stable under the step
    let mut x: Vec<T> = (0..n).map(|i| T::from_f64(i as f64 * 0.37 % 5.0)).collect();
    for i in (1..n).rev() {
        x.swap(i, rng.random_range(0..=i));
    }
    let wp: Vec<T> = random(rng, n / 4, -1.0, 1.0);
    let (_, arg) = nn::maxpool2x2_forward(&tensor(xs, x.clone())).unwrap();
    let g = nn::maxpool2x2_backward(xs, &arg, &tensor([2, 4, 4, 4], wp.clone())).unwrap();
    let nx = numeric(&x, h.min(0.01), &|v| dot(&wp, &nn::maxpool2x2_forward(&tensor(xs, v.to_vec())).unwrap().0));
    out.push(Check { layer: "maxpool2x2", wrt: "input", rel_err: rel_err(&nx, &as64(g.data())) });

    let x: Vec<T> = random(rng, n / 4, -1.0, 1.0);
    let g = nn::upsample_nearest2x_backward(&wt).unwrap();
    let nx = numeric(&x, h, &|v| dot(&w, &nn::upsample_nearest2x_forward(&tensor([2, 4, 4, 4], v.to_vec()))));
    out.push(Check { layer: "upsample_nearest2x", wrt: "input", rel_err: rel_err(&nx, &as64(g.data())) });

    let x: Vec<T> = random(rng, n, -1.0, 1.0);
    let mut drng = ChaCha8Rng::seed_from_u64(3);
    let (_, mask) = nn::dropout_forward(&tensor(xs, x.clone()), 0.3, Mode::Train, &mut drng).unwrap();
    let g = nn::dropout_backward(&mask, &wt).unwrap();
    let nx = numeric(&x, h, &|v| {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        dot(&w, &nn::dropout_forward(&tensor(xs, v.to_vec()), 0.3, Mode::Train, &mut r).unwrap().0)
    });
    out.push(Check { layer: "dropout", wrt: "input", rel_err: rel_err(&nx, &as64(g.data())) });
}

/// Sigmoid followed by mean BCE, differentiated with respect to the logits.
fn bce_composite_checks<T: Element>(rng: &mut ChaCha8Rng, h: f64, out: &mut Vec<Check>) {
    let shape = [2, 1, 8, 8];
    let z: Vec<T> = random(rng, 128, -3.0, 3.0);
    let y: Vec<T> = (0..128).map(|_| if rng.random_bool(0.5) { T::one() } else { T::zero() }).collect();
    let yt = tensor(shape, y);
    let p = nn::sigmoid_forward(&tensor(shape, z.clone()));
    let (_, gp) = bce_loss(&p, &yt).unwrap();
    let gz = nn::sigmoid_backward(&p, &gp).unwrap();
    let nz = numeric(&z, h, &|v| bce_loss(&nn::sigmoid_forward(&tensor(shape, v.to_vec())), &yt).unwrap().0);
    out.push(Check { layer: "bce_composite", wrt: "logits", rel_err: rel_err(&nz, &as64(gz.data())) });

    let pr: Vec<T> = random(rng, 128, 0.05, 0.95);
    let (_, g) = bce_loss(&tensor(shape, pr.clone()), &yt).unwrap();
    let np = numeric(&pr, h.min(1e-3), &|v| bce_loss(&tensor(shape, v.to_vec()), &yt).unwrap().0);
    out.push(Check { layer: "bce", wrt: "probabilities", rel_err: rel_err(&np, &as64(g.data())) });
}

/// Runs every layer check with element type `T` and step `h`.
pub fn all_checks<T: Element>(seed: u64, h: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    conv_checks::<T>(&mut rng, 3, h, &mut out);
    conv_checks::<T>(&mut rng, 1, h, &mut out);
    conv_transpose_checks::<T>(&mut rng, h, &mut out);
    batchnorm_checks::<T>(&mut rng, h, &mut out);
    elementwise_checks::<T>(&mut rng, h, &mut out);
    bce_composite_checks::<T>(&mut rng, h, &mut out);
    out
}
