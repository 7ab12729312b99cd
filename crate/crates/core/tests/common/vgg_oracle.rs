//! VGG19 encoder fingerprints: sum and max of each tap activation on a fixed
//! input, compared with values computed by torchvision
//! (`scripts/vgg19_fingerprint.py`).

use std::path::Path;

use segunet::model::{build_vgg19, vgg19_encoder_layout, ArchiveTensor, ModelConfig, WeightArchive};
use segunet::nn::Mode;
use segunet::Tensor;

/// (tap, sum, max) of one tap activation.
pub type Fingerprint = (String, f64, f64);

pub const FINGERPRINT_SIZE: usize = 32;

/// torchvision fingerprints for the hashed synthetic weights, as
/// (tap, sum, max).
pub const SYNTHETIC_FINGERPRINTS: [(&str, f64, f64); 5] = [
    ("s1", 21190.76883689966, 3.1390585899353027),
    ("s2", 11180.256129771471, 3.3564743995666504),
    ("s3", 4866.500876449747, 2.8630423545837402),
    ("s4", 1741.9496839460917, 2.396928071975708),
    ("bottleneck", 136.94120409176685, 0.4902605712413788),
];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(key: u64) -> f64 {
    2.0 * ((splitmix64(key) >> 11) as f64 * 2f64.powi(-53)) - 1.0
}

/// He-uniform weights keyed by (layer, index), identical to the script's.
pub fn synthetic_archive() -> WeightArchive {
    let mut a = WeightArchive::new();
    for (layer, (name, shape, width)) in vgg19_encoder_layout().into_iter().enumerate() {
        let base = ((layer + 1) as u64) << 40;
        let fan_in = (shape[1] * 9) as f64;
        let n: usize = shape.iter().product();
        let w = (0..n as u64).map(|j| (unit(base | j) * (6.0 / fan_in).sqrt()) as f32).collect();
        let b = (0..width as u64).map(|o| (unit(base | (1 << 39) | o) * 0.05) as f32).collect();
        a.insert(format!("{name}.weight"), ArchiveTensor::new(shape, w).unwrap()).unwrap();
        a.insert(format!("{name}.bias"), ArchiveTensor::new(vec![width], b).unwrap()).unwrap();
    }
    a
}

pub fn fixed_input(size: usize) -> Tensor {
    Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| {
        let (c, y, x) = (c as f64, y as f64, x as f64);
        (0.5 + 0.5 * (0.11 * x + 0.07 * y * (c + 1.0) + c).sin()) as f32
    })
}

/// Fingerprints of the encoder taps of a VGG19 model built on `weights`.
pub fn fingerprints(weights: &WeightArchive, size: usize) -> Vec<Fingerprint> {
    let mut model = build_vgg19(&ModelConfig::default(), Some(weights)).unwrap();
    model.set_mode(Mode::Infer);
    model
        .tap_activations(&fixed_input(size))
        .unwrap()
        .into_iter()
        .map(|(name, t)| {
            let sum = t.data().iter().map(|&v| v as f64).sum();
            let max = t.data().iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
            (name, sum, max)
        })
        .collect()
}

/// Largest relative deviation from the reference over every tap statistic,
/// or an error naming a tap that is missing.
pub fn max_rel_deviation(got: &[Fingerprint], want: &[Fingerprint]) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for (name, s, m) in want {
        let (_, gs, gm) = got.iter().find(|g| &g.0 == name).ok_or_else(|| format!("tap {name} missing"))?;
        worst = worst.max((gs - s).abs() / s.abs().max(1e-12));
        worst = worst.max((gm - m).abs() / m.abs().max(1e-12));
    }
    Ok(worst)
}

/// Reference fingerprints from a JSON file written by the scripts.
pub fn read_reference(path: &Path) -> Result<(usize, Vec<Fingerprint>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let size = v["size"].as_u64().ok_or("missing size")? as usize;
    let taps = v["taps"]
        .as_array()
        .ok_or("missing taps")?
        .iter()
        .map(|t| {
            Some((t["tap"].as_str()?.to_string(), t["sum"].as_f64()?, t["max"].as_f64()?))
        })
        .collect::<Option<Vec<_>>>()
        .ok_or("malformed tap entry")?;
    Ok((size, taps))
}

pub fn synthetic_reference() -> Vec<Fingerprint> {
    SYNTHETIC_FINGERPRINTS.iter().map(|(n, s, m)| (n.to_string(), *s, *m)).collect()
}
