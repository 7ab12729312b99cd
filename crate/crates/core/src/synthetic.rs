//! Synthetic radiograph-like samples for tests, benchmarks and demos.
//!
//! Each sample is a few bright ellipses over a textured dark background; the
//! mask is the union of the ellipses.

use std::path::Path;

use image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{PreprocessedSample, SourceSubset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grey levels and mask for one `size x size` sample, row-major.
pub fn synthetic_planes(size: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..=3))
        .map(|_| {
            (
                rng.random_range(0.25..0.75) * s,
                rng.random_range(0.25..0.75) * s,
                rng.random_range(0.12..0.25) * s,
                rng.random_range(0.08..0.2) * s,
            )
        })
        .collect();
    let mut grey = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
            let inside = blobs.iter().any(|&(cy, cx, ry, rx)| ((fy - cy) / ry).powi(2) + ((fx - cx) / rx).powi(2) <= 1.0);
            let base: f64 = if inside { 190.0 } else { 60.0 };
            let v = base + rng.random_range(-25.0..25.0);
            grey.push(v.clamp(0.0, 255.0) as u8);
            mask.push(if inside { 255 } else { 0 });
        }
    }
    (grey, mask)
}

/// An in-memory sample equivalent to decoding the synthetic PNGs.
pub fn synthetic_sample(id: &str, size: usize, seed: u64) -> PreprocessedSample {
    let (grey, mask) = synthetic_planes(size, seed);
    let image = Tensor::from_fn([1, 3, size, size], |[_, _, y, x]| (grey[y * size + x] as f64 / 255.0) as f32);
    let mask = Tensor::from_vec([1, 1, size, size], mask.iter().map(|&m| if m > 127 { 1.0 } else { 0.0 }).collect())
        .expect("plane-sized");
    PreprocessedSample { image, mask, sample_id: id.to_string() }
}

/// Writes `counts[i]` grey PNG pairs into each source subset directory
/// under `root`. Ids are `"{subset}_{i:03}"`.
pub fn write_synthetic_dataset(root: impl AsRef<Path>, counts: [usize; 3], size: usize, seed: u64) -> Result<Vec<String>> {
    let root = root.as_ref();
    let mut ids = Vec::new();
    let mut k = 0u64;
    for (subset, &n) in SourceSubset::ALL.iter().zip(&counts) {
        let dir = root.join(subset.dir_name());
        for sub in ["images", "masks"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        for i in 0..n {
            let id = format!("{}_{i:03}", subset.dir_name());
            let (grey, mask) = synthetic_planes(size, seed.wrapping_add(k));
            k += 1;
            let save = |data: Vec<u8>, sub: &str| -> Result<()> {
                let path = dir.join(sub).join(format!("{id}.png"));
                let img = GrayImage::from_raw(size as u32, size as u32, data).expect("plane-sized");
                img.save(&path).map_err(|e| Error::Decode { path: path.clone(), reason: e.to_string() })
            };
            save(grey, "images")?;
            save(mask, "masks")?;
            ids.push(id);
        }
    }
    Ok(ids)
}
