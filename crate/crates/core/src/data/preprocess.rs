use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_IMAGE_SIZE: usize = 256;

/// One network-ready sample: image `(1, 3, S, S)` in [0, 1] and mask
/// `(1, 1, S, S)` in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSample {
    pub image: Tensor,
    pub mask: Tensor,
    pub sample_id: String,
}

impl PreprocessedSample {
    pub fn load(pair: &SamplePair, size: usize) -> Result<Self> {
        let image = preprocess_image(&decode_png(&pair.image_path)?, size)?;
        let mask = preprocess_mask(&decode_png(&pair.mask_path)?, size)?;
        Ok(PreprocessedSample { image, mask, sample_id: pair.sample_id.clone() })
    }
}

pub fn decode_png(path: &Path) -> Result<DynamicImage> {
    let decode_err = |reason: String| Error::Decode { path: path.to_path_buf(), reason };
    ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))
}

/// 8-bit planes of a decoded image: one for grayscale, three for colour.
/// Alpha is dropped.
fn planes_u8(raw: &DynamicImage) -> Result<Vec<Vec<u8>>> {
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    let split = |buf: &[u8], stride: usize, n: usize| -> Vec<Vec<u8>> {
        (0..n).map(|c| buf.iter().skip(c).step_by(stride).copied().collect()).collect()
    };
    let planes = match raw {
        DynamicImage::ImageLuma8(b) => vec![b.as_raw().clone()],
        DynamicImage::ImageLumaA8(b) => split(b.as_raw(), 2, 1),
        DynamicImage::ImageRgb8(b) => split(b.as_raw(), 3, 3),
        DynamicImage::ImageRgba8(b) => split(b.as_raw(), 4, 3),
        other => return Err(Error::UnsupportedDepth(format!("{:?}", other.color()))),
    };
    debug_assert!(planes.iter().all(|p| p.len() == w * h));
    Ok(planes)
}

/// Bilinear resampling with half-pixel centres: output pixel `d` samples
/// source coordinate `(d + 0.5) * in / out - 0.5`, clamped to the edge.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = axis(h, oh);
    let xs = axis(w, ow);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(src[y0 * w + x0], src[y0 * w + x1], tx);
            let bottom = lerp(src[y1 * w + x0], src[y1 * w + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Nearest-neighbour resampling: output pixel `d` copies source pixel
/// `floor((d + 0.5) * in / out)`.
pub fn resize_nearest<T: Copy>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let pick = |d: usize, n_in: usize, n_out: usize| (((2 * d + 1) * n_in) / (2 * n_out)).min(n_in - 1);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = pick(y, h, oh);
        for x in 0..ow {
            out.push(src[sy * w + pick(x, w, ow)]);
        }
    }
    out
}

/// Scales to [0, 1], resizes bilinearly to `size x size` and replicates
/// grayscale input across three channels.
pub fn preprocess_image(raw: &DynamicImage, size: usize) -> Result<Tensor> {
    let planes = planes_u8(raw)?;
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    let resized: Vec<Vec<f32>> = planes
        .iter()
        .map(|p| {
            let scaled: Vec<f64> = p.iter().map(|&v| v as f64 / 255.0).collect();
            resize_bilinear(&scaled, h, w, size, size).into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        data.extend_from_slice(&resized[if resized.len() == 1 { 0 } else { c }]);
    }
    Tensor::from_vec([1, 3, size, size], data)
}

/// Converts to 8-bit luminance, resizes with nearest neighbour and
/// binarises (`value > 127` is mask).
pub fn preprocess_mask(raw: &DynamicImage, size: usize) -> Result<Tensor> {
    let gray: GrayImage = match raw {
        DynamicImage::ImageLuma8(b) => b.clone(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => raw.to_luma8(),
        other => return Err(Error::UnsupportedDepth(format!("{:?}", other.color()))),
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = resize_nearest(gray.as_raw(), h, w, size, size)
        .into_iter()
        .map(|v| if v > 127 { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec([1, 1, size, size], data)
}
