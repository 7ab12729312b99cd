use rand::Rng;
use rand_distr::{Distribution, Normal};

/// He-normal weights: zero-mean Gaussian with standard deviation
/// `sqrt(2 / fan_in)`.
pub fn he_normal<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<f32> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| normal.sample(rng) as f32).collect()
}
