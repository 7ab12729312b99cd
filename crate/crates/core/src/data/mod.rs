//! Dataset discovery, preprocessing and train/validation/test splitting.
//!
//! Expected layout under the dataset root (missing subsets are skipped):
//!
//! ```text
//! <root>/train/images/*.png        <root>/train/masks/*.png
//! <root>/test/images/*.png         <root>/test/masks/*.png
//! <root>/new_dataset/images/*.png  <root>/new_dataset/masks/*.png
//! ```
//!
//! Images and masks pair by filename stem.

mod preprocess;
mod split;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

pub use preprocess::{
    decode_png, preprocess_image, preprocess_mask, resize_bilinear, resize_nearest, PreprocessedSample, DEFAULT_IMAGE_SIZE,
};
pub use split::{split_dataset, split_sizes, Ratios, SplitAssignment, SplitName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSubset {
    TrainFolder,
    TestFolder,
    NewDataset,
}

impl SourceSubset {
    pub const ALL: [SourceSubset; 3] = [SourceSubset::TrainFolder, SourceSubset::TestFolder, SourceSubset::NewDataset];

    pub fn dir_name(self) -> &'static str {
        match self {
            SourceSubset::TrainFolder => "train",
            SourceSubset::TestFolder => "test",
            SourceSubset::NewDataset => "new_dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePair {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub source_subset: SourceSubset,
    pub sample_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub pairs: Vec<SamplePair>,
    pub total_count: usize,
}

impl DatasetIndex {
    pub fn from_pairs(mut pairs: Vec<SamplePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        pairs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(w) = pairs.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
            return Err(Error::DuplicateId(w[0].sample_id.clone()));
        }
        let total_count = pairs.len();
        Ok(DatasetIndex { pairs, total_count })
    }

    pub fn ids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.sample_id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&SamplePair> {
        self.pairs
            .binary_search_by(|p| p.sample_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.pairs[i])
    }

    /// Pair counts per source folder.
    pub fn counts_by_subset(&self) -> BTreeMap<SourceSubset, usize> {
        let mut m = BTreeMap::new();
        for p in &self.pairs {
            *m.entry(p.source_subset).or_insert(0) += 1;
        }
        m
    }

    /// Decodes and preprocesses the given samples, in the given order.
    pub fn load_samples(&self, ids: &[String], size: usize) -> Result<Vec<PreprocessedSample>> {
        let pairs = ids
            .iter()
            .map(|id| self.get(id).ok_or_else(|| Error::UnknownSample(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        exec::map_indexed(pairs.len(), |i| PreprocessedSample::load(pairs[i], size)).into_iter().collect()
    }
}

/// PNG files in `dir` keyed by stem; an absent directory is empty.
fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if out.insert(stem.to_string(), path.clone()).is_some() {
                return Err(Error::DuplicateId(stem.to_string()));
            }
        }
    }
    Ok(out)
}

/// Pairs every image under `root` with its mask.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let mut pairs = Vec::new();
    for subset in SourceSubset::ALL {
        let dir = root.join(subset.dir_name());
        let images = png_stems(&dir.join("images"))?;
        let mut masks = png_stems(&dir.join("masks"))?;
        for (stem, image_path) in images {
            let mask_path = masks.remove(&stem).ok_or_else(|| Error::MissingMask(stem.clone()))?;
            pairs.push(SamplePair { image_path, mask_path, source_subset: subset, sample_id: stem });
        }
        for stem in masks.keys() {
            log::warn!("mask `{stem}` in {} has no image; ignored", dir.display());
        }
    }
    DatasetIndex::from_pairs(pairs)
}
