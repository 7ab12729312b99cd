use crate::error::{Error, Result};
use crate::exec;
use crate::nn::Mode;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct BatchNormParams<'a, T> {
    pub gamma: &'a [T],
    pub beta: &'a [T],
    pub running_mean: &'a [T],
    pub running_var: &'a [T],
    pub eps: f64,
    pub momentum: f64,
}

/// What the backward pass needs from a batch-norm forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub mode: Mode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormOutput<T> {
    pub output: Tensor<T>,
    pub cache: BatchNormCache<T>,
    /// Updated running statistics (unchanged in infer mode).
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

fn channel_values<T: Element>(x: &Tensor<T>, ch: usize) -> impl Iterator<Item = T> + '_ {
    let (c, hw) = (x.channels(), x.plane());
    (0..x.batch()).flat_map(move |b| x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().copied())
}

/// Per-channel normalisation. Train mode uses the biased batch statistics
/// over (batch, height, width) and blends them into the running statistics
/// as `running = momentum * running + (1 - momentum) * batch`; infer mode
/// uses the running statistics as-is.
pub fn batchnorm_forward<T: Element>(x: &Tensor<T>, p: BatchNormParams<'_, T>, mode: Mode) -> Result<BatchNormOutput<T>> {
    let c = x.channels();
    for (name, len) in [
        ("gamma", p.gamma.len()),
        ("beta", p.beta.len()),
        ("running_mean", p.running_mean.len()),
        ("running_var", p.running_var.len()),
    ] {
        if len != c {
            return Err(Error::ShapeMismatch(format!("batchnorm {name} has {len} entries for {c} channels")));
        }
    }
    let hw = x.plane();
    let count = (x.batch() * hw) as f64;

    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => exec::map_indexed(c, |ch| {
            let mean = channel_values(x, ch).map(|v| v.as_f64()).sum::<f64>() / count;
            let var = channel_values(x, ch).map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / count;
            (mean, var)
        })
        .into_iter()
        .unzip(),
        Mode::Infer => (
            p.running_mean.iter().map(|v| v.as_f64()).collect(),
            p.running_var.iter().map(|v| v.as_f64()).collect(),
        ),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::from_f64(1.0 / (v + p.eps).sqrt())).collect();
    let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64(m)).collect();

    let mut x_hat = Tensor::zeros(x.shape());
    let mut output = Tensor::zeros(x.shape());
    let xd = x.data();
    exec::for_each_chunk_pair_mut(x_hat.data_mut(), hw, output.data_mut(), hw, |plane, xh, out| {
        let ch = plane % c;
        let src = &xd[plane * hw..(plane + 1) * hw];
        let (m, s, g, b) = (mean_t[ch], inv_std[ch], p.gamma[ch], p.beta[ch]);
        for ((h, o), &v) in xh.iter_mut().zip(out.iter_mut()).zip(src) {
            *h = (v - m) * s;
            *o = g * *h + b;
        }
    });

    let (running_mean, running_var) = match mode {
        Mode::Train => {
            let mom = p.momentum;
            let blend = |old: &[T], new: &[f64]| -> Vec<T> {
                old.iter().zip(new).map(|(&o, &n)| T::from_f64(mom * o.as_f64() + (1.0 - mom) * n)).collect()
            };
            (blend(p.running_mean, &mean), blend(p.running_var, &var))
        }
        Mode::Infer => (p.running_mean.to_vec(), p.running_var.to_vec()),
    };

    Ok(BatchNormOutput {
        output,
        cache: BatchNormCache { mode, x_hat, inv_std },
        running_mean,
        running_var,
    })
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward<T: Element>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    grad_out.ensure_shape(cache.x_hat.shape(), "batchnorm upstream gradient")?;
    let c = grad_out.channels();
    let hw = grad_out.plane();
    let count = (grad_out.batch() * hw) as f64;

    let sums: Vec<(f64, f64)> = exec::map_indexed(c, |ch| {
        channel_values(grad_out, ch)
            .zip(channel_values(&cache.x_hat, ch))
            .fold((0.0, 0.0), |(sg, sgx), (g, xh)| (sg + g.as_f64(), sgx + g.as_f64() * xh.as_f64()))
    });
    let dbeta: Vec<T> = sums.iter().map(|s| T::from_f64(s.0)).collect();
    let dgamma: Vec<T> = sums.iter().map(|s| T::from_f64(s.1)).collect();

    let mut dx = Tensor::zeros(grad_out.shape());
    let gd = grad_out.data();
    let xh = cache.x_hat.data();
    let mode = cache.mode;
    exec::for_each_chunk_mut(dx.data_mut(), hw, |plane, d| {
        let ch = plane % c;
        let scale = gamma[ch] * cache.inv_std[ch];
        let g = &gd[plane * hw..(plane + 1) * hw];
        match mode {
            Mode::Infer => d.iter_mut().zip(g).for_each(|(d, &g)| *d = scale * g),
            Mode::Train => {
                let mean_g = T::from_f64(sums[ch].0 / count);
                let mean_gx = T::from_f64(sums[ch].1 / count);
                let xh = &xh[plane * hw..(plane + 1) * hw];
                for ((d, &g), &h) in d.iter_mut().zip(g).zip(xh) {
                    *d = scale * (g - mean_g - h * mean_gx);
                }
            }
        }
    });
    Ok((dx, dgamma, dbeta))
}
