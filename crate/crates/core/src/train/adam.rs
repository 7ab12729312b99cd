use indexmap::IndexMap;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradientTape, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// First and second moment estimates per parameter, plus the step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub moments: IndexMap<String, Moments>,
    pub step: u64,
}

/// One Adam update of a single tensor. `step` is the post-increment count
/// (1 on the first update).
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Float>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64, cfg: &AdamConfig) {
    let c = |x: f64| T::from(x).expect("finite hyperparameter");
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let bc1 = c(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = c(1.0 - cfg.beta2.powi(step as i32));
    let (lr, eps) = (c(cfg.learning_rate), c(cfg.eps));
    let one = T::one();
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one optimiser step to every trainable parameter that has a
/// gradient. Parameters without a gradient keep their moments untouched.
pub fn adam_step(params: &mut ParamStore, grads: &GradientTape, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in &grads.params {
        let p = params.get(name).ok_or_else(|| Error::MissingWeight(name.clone()))?;
        if p.data.len() != g.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient for `{name}` has {} values, parameter has {}",
                g.len(),
                p.data.len()
            )));
        }
        if let Some(mo) = state.moments.get(name) {
            if mo.m.len() != g.len() || mo.v.len() != g.len() {
                return Err(Error::ShapeMismatch(format!("optimiser moments for `{name}`")));
            }
        }
    }
    state.step += 1;
    let step = state.step;
    for (name, g) in &grads.params {
        let p = params.get_mut(name).expect("validated above");
        if !p.trainable {
            continue;
        }
        let mo = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| Moments { m: vec![0.0; g.len()], v: vec![0.0; g.len()] });
        adam_update(&mut p.data, g, &mut mo.m, &mut mo.v, step, cfg);
    }
    Ok(())
}
