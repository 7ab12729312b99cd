use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios { train: 0.7, val: 0.1, test: 0.2 }
    }
}

impl Ratios {
    pub fn validate(&self) -> Result<()> {
        let sum = self.train + self.val + self.test;
        let in_range = [self.train, self.val, self.test].iter().all(|r| (0.0..=1.0).contains(r));
        if !in_range || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            o => Err(format!("unknown split `{o}` (expected train, val or test)")),
        }
    }
}

/// Serialised as the split manifest `{seed, ratios, train, val, test}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: Ratios,
    #[serde(rename = "train")]
    pub train_ids: Vec<String>,
    #[serde(rename = "val")]
    pub val_ids: Vec<String>,
    #[serde(rename = "test")]
    pub test_ids: Vec<String>,
}

impl SplitAssignment {
    pub fn ids(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train_ids,
            SplitName::Val => &self.val_ids,
            SplitName::Test => &self.test_ids,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_ids.len(), self.val_ids.len(), self.test_ids.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `(floor(train * n), floor(val * n), remainder)`. A 1e-9 slack absorbs
/// products such as `0.29 * 100` landing just below an integer.
pub fn split_sizes(n: usize, ratios: &Ratios) -> (usize, usize, usize) {
    let floor = |r: f64| ((r * n as f64 + 1e-9).floor() as usize).min(n);
    let train = floor(ratios.train);
    let val = floor(ratios.val).min(n - train);
    (train, val, n - train - val)
}

/// Seeded shuffle of the sorted id list, cut by [`split_sizes`].
pub fn split_dataset(index: &DatasetIndex, ratios: Ratios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if index.pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ids = index.ids();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_sizes(ids.len(), &ratios);
    let test_ids = ids.split_off(train + val);
    let val_ids = ids.split_off(train);
    Ok(SplitAssignment { seed, ratios, train_ids: ids, val_ids, test_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SamplePair, SourceSubset};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn index(n: usize) -> DatasetIndex {
        let pairs = (0..n)
            .map(|i| SamplePair {
                image_path: format!("i{i}.png").into(),
                mask_path: format!("m{i}.png").into(),
                source_subset: SourceSubset::TrainFolder,
                sample_id: format!("s{i:04}"),
            })
            .collect();
        DatasetIndex::from_pairs(pairs).unwrap()
    }

    #[test]
    fn floor_rule_sizes() {
        assert_eq!(split_sizes(323, &Ratios::default()), (226, 32, 65));
        assert_eq!(split_sizes(10, &Ratios::default()), (7, 1, 2));
        for seed in [0, 1, 42, 9999] {
            assert_eq!(split_dataset(&index(10), Ratios::default(), seed).unwrap().sizes(), (7, 1, 2));
        }
    }

    #[test]
    fn deterministic() {
        let idx = index(50);
        let a = split_dataset(&idx, Ratios::default(), 42).unwrap();
        let b = split_dataset(&idx, Ratios::default(), 42).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a, split_dataset(&idx, Ratios::default(), 43).unwrap());
    }

    #[test]
    fn bad_ratios() {
        let r = Ratios { train: 0.7, val: 0.2, test: 0.2 };
        assert!(matches!(split_dataset(&index(5), r, 1), Err(Error::BadRatios(_))));
    }

    proptest! {
        #[test]
        fn partition(n in 1usize..400, seed in any::<u64>()) {
            let idx = index(n);
            let s = split_dataset(&idx, Ratios::default(), seed).unwrap();
            let all: BTreeSet<_> = idx.ids().into_iter().collect();
            let mut seen = BTreeSet::new();
            for id in s.train_ids.iter().chain(&s.val_ids).chain(&s.test_ids) {
                prop_assert!(seen.insert(id.clone()), "duplicate {}", id);
            }
            prop_assert_eq!(seen, all);
            let (t, v, _) = s.sizes();
            prop_assert_eq!(t, (0.7 * n as f64 + 1e-9).floor() as usize);
            prop_assert_eq!(v, (0.1 * n as f64 + 1e-9).floor() as usize);
        }
    }
}
