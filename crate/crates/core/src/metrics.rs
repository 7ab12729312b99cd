//! Pixelwise binary-segmentation metrics.
//!
//! Class 1 is the mask, class 0 the background. Every metric derives from
//! [`ConfusionCounts`]; reports state their aggregation policy explicitly.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::data::{PreprocessedSample, SplitName};
use crate::exec;
use crate::model::ModelGraph;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with prediction and ground truth exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts { tp: self.tp, fp: self.fn_, fn_: self.fp, tn: self.tn }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

fn count_slice(pred: &[f32], gt: &[f32], threshold: f32) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p > threshold, g > 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Thresholds `pred` (`p > threshold` is mask) and counts it against `gt`.
pub fn confusion_counts(pred: &Tensor, gt: &Tensor, threshold: f64) -> Result<ConfusionCounts> {
    Ok(per_sample_counts(pred, gt, threshold)?.into_iter().sum())
}

/// One [`ConfusionCounts`] per batch sample.
pub fn per_sample_counts(pred: &Tensor, gt: &Tensor, threshold: f64) -> Result<Vec<ConfusionCounts>> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let t = threshold as f32;
    Ok(exec::map_indexed(pred.batch(), |b| count_slice(pred.sample(b), gt.sample(b), t)))
}

/// The seven reported metrics, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub dice: f64,
    pub iou: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub specificity: f64,
}

impl Scores {
    pub fn as_array(&self) -> [f64; 7] {
        [self.accuracy, self.dice, self.iou, self.recall, self.precision, self.f1, self.specificity]
    }

    pub const NAMES: [&'static str; 7] = ["accuracy", "dice", "iou", "recall", "precision", "f1", "specificity"];

    fn mean(all: &[Scores]) -> Scores {
        let n = all.len() as f64;
        let avg = |f: fn(&Scores) -> f64| all.iter().map(f).sum::<f64>() / n;
        Scores {
            accuracy: avg(|s| s.accuracy),
            dice: avg(|s| s.dice),
            iou: avg(|s| s.iou),
            recall: avg(|s| s.recall),
            precision: avg(|s| s.precision),
            f1: avg(|s| s.f1),
            specificity: avg(|s| s.specificity),
        }
    }
}

fn ratio(num: u64, den: u64, empty: f64, what: &str) -> f64 {
    if den == 0 {
        log::warn!("{what} has a zero denominator; reporting {empty}");
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Standard pixel-level definitions. Zero denominators give 0, except
/// recall with no positive pixels and specificity with no negative pixels,
/// which are vacuously 1.
pub fn metrics_from_counts(c: &ConfusionCounts) -> Result<Scores> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let precision = ratio(c.tp, c.tp + c.fp, 0.0, "precision");
    let recall = ratio(c.tp, c.tp + c.fn_, 1.0, "recall");
    let dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, 0.0, "dice");
    // Harmonic mean of precision and recall. With tp > 0 it reduces to the
    // Dice expression, which is evaluated directly so the two agree exactly;
    // with tp == 0 either precision or recall is 0 (or both terms vanish).
    let f1 = if c.tp == 0 { 0.0 } else { dice };
    Ok(Scores {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        dice,
        iou: ratio(c.tp, c.tp + c.fp + c.fn_, 0.0, "iou"),
        recall,
        precision,
        f1,
        specificity: ratio(c.tn, c.tn + c.fp, 1.0, "specificity"),
    })
}

/// Row-stochastic 2x2 matrix: rows are the true class (background, mask),
/// columns the predicted class.
pub fn normalized_confusion_matrix(c: &ConfusionCounts) -> Result<[[f64; 2]; 2]> {
    let neg = c.tn + c.fp;
    let pos = c.fn_ + c.tp;
    if neg == 0 {
        return Err(Error::EmptyRow(0));
    }
    if pos == 0 {
        return Err(Error::EmptyRow(1));
    }
    Ok([
        [c.tn as f64 / neg as f64, c.fp as f64 / neg as f64],
        [c.fn_ as f64 / pos as f64, c.tp as f64 / pos as f64],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Pool pixel counts over every sample, then compute once.
    Micro,
    /// Compute per sample, then average.
    Macro,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            o => Err(format!("unknown aggregation `{o}` (expected micro or macro)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub scores: Scores,
    pub counts: ConfusionCounts,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub samples: usize,
    /// `None` when one of the true classes has no pixels.
    pub confusion_matrix: Option<[[f64; 2]; 2]>,
    /// Which split the samples came from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitName>,
}

impl MetricsReport {
    /// Aggregates per-sample counts according to `aggregation`.
    pub fn from_sample_counts(per_sample: &[ConfusionCounts], threshold: f64, aggregation: Aggregation) -> Result<Self> {
        let counts: ConfusionCounts = per_sample.iter().copied().sum();
        let scores = match aggregation {
            Aggregation::Micro => metrics_from_counts(&counts)?,
            Aggregation::Macro => {
                if per_sample.is_empty() {
                    return Err(Error::EmptyCounts);
                }
                let each = per_sample.iter().map(metrics_from_counts).collect::<Result<Vec<_>>>()?;
                Scores::mean(&each)
            }
        };
        Ok(MetricsReport {
            scores,
            counts,
            threshold,
            aggregation,
            samples: per_sample.len(),
            confusion_matrix: normalized_confusion_matrix(&counts).ok(),
            split: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks a parsed report against the published schema.
    pub fn validate_json(value: &serde_json::Value) -> Result<()> {
        let obj = value.as_object().ok_or_else(|| Error::Schema("report must be an object".into()))?;
        let unit = |k: &str| -> Result<()> {
            match obj.get(k).and_then(|v| v.as_f64()) {
                Some(v) if (0.0..=1.0).contains(&v) => Ok(()),
                Some(v) => Err(Error::Schema(format!("`{k}` = {v} is outside [0, 1]"))),
                None => Err(Error::Schema(format!("missing numeric `{k}`"))),
            }
        };
        for k in Scores::NAMES {
            unit(k)?;
        }
        unit("threshold")?;
        let counts = obj
            .get("counts")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::Schema("missing `counts` object".into()))?;
        for k in ["tp", "fp", "fn", "tn"] {
            counts.get(k).and_then(|v| v.as_u64()).ok_or_else(|| Error::Schema(format!("missing count `{k}`")))?;
        }
        match obj.get("aggregation").and_then(|v| v.as_str()) {
            Some("micro" | "macro") => {}
            _ => return Err(Error::Schema("`aggregation` must be \"micro\" or \"macro\"".into())),
        }
        obj.get("samples").and_then(|v| v.as_u64()).ok_or_else(|| Error::Schema("missing `samples`".into()))?;
        match obj.get("confusion_matrix") {
            Some(serde_json::Value::Null) => {}
            Some(serde_json::Value::Array(rows)) if rows.len() == 2 => {
                for row in rows {
                    let r = row.as_array().filter(|r| r.len() == 2).ok_or_else(|| Error::Schema("confusion matrix rows must have 2 entries".into()))?;
                    let s: f64 = r.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(Error::Schema(format!("confusion matrix row sums to {s}")));
                    }
                }
            }
            _ => return Err(Error::Schema("`confusion_matrix` must be a 2x2 array or null".into())),
        }
        serde_json::from_value::<MetricsReport>(value.clone()).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(())
    }
}

/// Batch size used for inference over a split.
pub const EVAL_BATCH: usize = 4;

/// Infer-mode probability maps, one `(1, 1, H, W)` tensor per sample, in
/// input order.
pub fn predict_samples(model: &ModelGraph, samples: &[PreprocessedSample], batch_size: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let x = Tensor::stack(&chunk.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let y = model.infer(&x)?;
        let [_, c, h, w] = y.shape();
        for b in 0..y.batch() {
            out.push(Tensor::from_vec([1, c, h, w], y.sample(b).to_vec())?);
        }
    }
    Ok(out)
}

/// Runs the model over `samples` in inference mode and reports metrics
/// against their masks.
pub fn evaluate_split(
    model: &ModelGraph,
    samples: &[PreprocessedSample],
    threshold: f64,
    aggregation: Aggregation,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyCounts);
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let x = Tensor::stack(&chunk.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let gt = Tensor::stack(&chunk.iter().map(|s| &s.mask).collect::<Vec<_>>())?;
        per_sample.extend(per_sample_counts(&model.infer(&x)?, &gt, threshold)?);
    }
    MetricsReport::from_sample_counts(&per_sample, threshold, aggregation)
}
