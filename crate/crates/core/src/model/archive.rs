//! Named-tensor container used for pretrained weights and checkpoints.
//!
//! Layout: an 8-byte little-endian manifest length, the UTF-8 JSON manifest
//! `[{"name", "shape", "offset"}, ...]`, then the payload of contiguous
//! little-endian `f32` values. `offset` is a byte offset into the payload.
//! An entry may also carry a free-form `meta` JSON value; checkpoints use a
//! zero-length entry named `meta` for their run metadata.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ArchiveTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(ArchiveTensor { shape, data })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightArchive {
    tensors: IndexMap<String, ArchiveTensor>,
    meta: Option<serde_json::Value>,
}

const META: &str = "meta";

impl WeightArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: ArchiveTensor) -> Result<()> {
        let name = name.into();
        if name == META {
            return Err(Error::CorruptArchive("`meta` is reserved".into()));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::DuplicateId(name));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveTensor> {
        self.tensors.get(name)
    }

    /// Looks up `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&ArchiveTensor> {
        let t = self.get(name).ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if t.shape != shape {
            return Err(Error::WeightShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    pub fn remove(&mut self, name: &str) -> Option<ArchiveTensor> {
        self.tensors.shift_remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArchiveTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn set_meta(&mut self, meta: serde_json::Value) {
        self.meta = Some(meta);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.tensors.len() + 1);
        let mut offset = 0;
        for (name, t) in &self.tensors {
            manifest.push(ManifestEntry { name: name.clone(), shape: t.shape.clone(), offset, meta: None });
            offset += 4 * t.data.len();
        }
        if let Some(meta) = &self.meta {
            manifest.push(ManifestEntry { name: META.into(), shape: vec![0], offset, meta: Some(meta.clone()) });
        }
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header: [u8; 8] = bytes
            .get(..8)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::CorruptArchive("file shorter than the 8-byte header".into()))?;
        let mlen = u64::from_le_bytes(header) as usize;
        let manifest_bytes = bytes
            .get(8..8usize.saturating_add(mlen))
            .ok_or_else(|| Error::CorruptArchive(format!("manifest length {mlen} exceeds file size")))?;
        let manifest: Vec<ManifestEntry> = serde_json::from_slice(manifest_bytes)
            .map_err(|e| Error::CorruptArchive(format!("bad manifest: {e}")))?;
        let payload = &bytes[8 + mlen..];

        let mut archive = WeightArchive::new();
        for entry in manifest {
            if entry.name == META {
                if archive.meta.is_some() {
                    return Err(Error::CorruptArchive("duplicate `meta` entry".into()));
                }
                archive.meta = Some(entry.meta.unwrap_or(serde_json::Value::Null));
                continue;
            }
            let count = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptArchive(format!("shape overflow for `{}`", entry.name)))?;
            let needed = count * 4;
            let available = payload.len().saturating_sub(entry.offset);
            if needed > available || entry.offset > payload.len() {
                return Err(Error::TruncatedPayload { name: entry.name, needed, available });
            }
            let data = payload[entry.offset..entry.offset + needed]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if archive.tensors.contains_key(&entry.name) {
                return Err(Error::CorruptArchive(format!("duplicate tensor `{}`", entry.name)));
            }
            archive.tensors.insert(entry.name, ArchiveTensor { shape: entry.shape, data });
        }
        Ok(archive)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Reads and validates an archive file.
pub fn load_weight_archive(path: impl AsRef<Path>) -> Result<WeightArchive> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    WeightArchive::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(manifest: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = (manifest.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn loads_single_tensor() {
        let bytes = raw(r#"[{"name":"t","shape":[2,2],"offset":0}]"#, &[0u8; 16]);
        let a = WeightArchive::from_bytes(&bytes).unwrap();
        assert_eq!(a.get("t").unwrap().data, vec![0.0; 4]);
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = raw(r#"[{"name":"t","shape":[2,2],"offset":0}]"#, &[0u8; 12]);
        assert!(matches!(
            WeightArchive::from_bytes(&bytes),
            Err(Error::TruncatedPayload { needed: 16, available: 12, .. })
        ));
    }

    #[test]
    fn corrupt_inputs() {
        assert!(matches!(WeightArchive::from_bytes(&[1, 2, 3]), Err(Error::CorruptArchive(_))));
        assert!(matches!(WeightArchive::from_bytes(&raw("not json", &[])), Err(Error::CorruptArchive(_))));
        let mut huge = 1000u64.to_le_bytes().to_vec();
        huge.extend_from_slice(b"[]");
        assert!(matches!(WeightArchive::from_bytes(&huge), Err(Error::CorruptArchive(_))));
        let dup = raw(
            r#"[{"name":"t","shape":[1],"offset":0},{"name":"t","shape":[1],"offset":0}]"#,
            &[0u8; 4],
        );
        assert!(matches!(WeightArchive::from_bytes(&dup), Err(Error::CorruptArchive(_))));
    }

    #[test]
    fn expect_reports_missing_and_shape() {
        let mut a = WeightArchive::new();
        a.insert("w", ArchiveTensor::new(vec![2, 3], vec![0.0; 6]).unwrap()).unwrap();
        assert!(matches!(a.expect("x", &[2, 3]), Err(Error::MissingWeight(n)) if n == "x"));
        assert!(matches!(a.expect("w", &[3, 2]), Err(Error::WeightShapeMismatch { .. })));
        assert!(a.expect("w", &[2, 3]).is_ok());
    }

    #[test]
    fn meta_survives() {
        let mut a = WeightArchive::new();
        a.insert("w", ArchiveTensor::new(vec![1], vec![1.5]).unwrap()).unwrap();
        a.set_meta(serde_json::json!({"epoch": 3}));
        let b = WeightArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(tensors in prop::collection::vec(
            (prop::collection::vec(1usize..4, 1..4), any::<u32>()), 1..6)
        ) {
            let mut a = WeightArchive::new();
            for (i, (shape, seed)) in tensors.iter().enumerate() {
                let n: usize = shape.iter().product();
                // arbitrary bit patterns, NaNs included
                let data = (0..n).map(|j| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(j as u32 * 97))).collect();
                a.insert(format!("t{i}"), ArchiveTensor::new(shape.clone(), data).unwrap()).unwrap();
            }
            let b = WeightArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
                prop_assert_eq!(na, nb);
                prop_assert_eq!(&ta.shape, &tb.shape);
                let ba: Vec<u32> = ta.data.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u32> = tb.data.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ba, bb);
            }
        }
    }
}
