use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::data::{
    decode_png, load_dataset, preprocess_image, split_dataset, PreprocessedSample, Ratios, SplitAssignment, SplitName,
    DEFAULT_IMAGE_SIZE,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_split, predict_samples, Aggregation, MetricsReport, EVAL_BATCH};
use crate::model::{build_baseline, build_vgg19, load_weight_archive, Architecture, ModelGraph};
use crate::nn::Mode;
use crate::runner::config::ExperimentConfig;
use crate::runner::plot::{plot_accuracy_curves, plot_confusion_matrix, CurveSummary};
use crate::train::{load_checkpoint, train_with_checkpoints, Checkpoint, CheckpointTarget, TrainingLog};

pub const CONFIG_ECHO: &str = "config.toml";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const DATASET_SUMMARY: &str = "dataset_summary.json";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const BEST_CHECKPOINT: &str = "best_checkpoint.bin";
pub const METRICS_JSON: &str = "metrics.json";
pub const CURVE_PNG: &str = "accuracy_curve.png";
pub const CONFUSION_PNG: &str = "confusion_matrix.png";
pub const PREDICTIONS_DIR: &str = "predictions";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn save_image<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: std::io::Error::other(e.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub subsets: BTreeMap<String, usize>,
    pub split_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOutput {
    pub split: SplitAssignment,
    pub summary: DatasetSummary,
    pub manifest_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Pairs the dataset, splits it and writes the split manifest and a
/// dataset summary into `out`.
pub fn cmd_prepare(dataset_root: &Path, out: &Path, seed: u64, ratios: Ratios) -> Result<PrepareOutput> {
    let index = load_dataset(dataset_root)?;
    let split = split_dataset(&index, ratios, seed)?;
    let (tr, va, te) = split.sizes();
    let summary = DatasetSummary {
        total: index.total_count,
        subsets: index.counts_by_subset().into_iter().map(|(s, n)| (s.dir_name().to_string(), n)).collect(),
        split_sizes: [("train", tr), ("val", va), ("test", te)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    create_dir(out)?;
    let manifest_path = out.join(SPLIT_MANIFEST);
    let summary_path = out.join(DATASET_SUMMARY);
    write(&manifest_path, split.to_json()? + "\n")?;
    write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    log::info!("{} pairs; split {tr}/{va}/{te}", index.total_count);
    Ok(PrepareOutput { split, summary, manifest_path, summary_path })
}

/// Paths of everything a training run leaves in its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config_echo: PathBuf,
    pub split_manifest: PathBuf,
    pub log_csv: PathBuf,
    pub best_checkpoint: PathBuf,
    pub metrics_json: PathBuf,
    pub curve_png: PathBuf,
    pub confusion_png: PathBuf,
    pub predictions_dir: PathBuf,
    pub log: TrainingLog,
    pub test_report: MetricsReport,
}

fn build_model(config: &ExperimentConfig) -> Result<ModelGraph> {
    let mc = config.model_config();
    match config.architecture {
        Architecture::Baseline => Ok(build_baseline(&mc)),
        Architecture::Vgg19Backbone => {
            let path = config.weights_path.as_ref().ok_or_else(|| {
                Error::InvalidConfig(vec!["weights_path: required when architecture = \"vgg19_backbone\"".into()])
            })?;
            build_vgg19(&mc, Some(&load_weight_archive(path)?))
        }
    }
}

fn select<'a>(samples: &'a [PreprocessedSample], ids: &[String]) -> Result<Vec<PreprocessedSample>> {
    let by_id: BTreeMap<&str, &'a PreprocessedSample> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    ids.iter()
        .map(|id| by_id.get(id.as_str()).map(|s| (*s).clone()).ok_or_else(|| Error::UnknownSample(id.clone())))
        .collect()
}

/// Probability map as a 16-bit PNG and the thresholded mask as 0/255.
fn write_prediction(dir: &Path, id: &str, prob: &[f32], size: (u32, u32), threshold: f64) -> Result<()> {
    let p16: Vec<u16> = prob.iter().map(|&p| (p as f64 * 65535.0).round().clamp(0.0, 65535.0) as u16).collect();
    let img16: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(size.0, size.1, p16).expect("sized");
    save_image(&img16, &dir.join(format!("{id}_prob.png")))?;
    save_image(&binary_mask(prob, size, threshold), &dir.join(format!("{id}_mask.png")))
}

fn binary_mask(prob: &[f32], size: (u32, u32), threshold: f64) -> GrayImage {
    let t = threshold as f32;
    GrayImage::from_raw(size.0, size.1, prob.iter().map(|&p| if p > t { 255 } else { 0 }).collect()).expect("sized")
}

/// Runs one experiment end to end from its config file.
pub fn cmd_train(config_path: &Path) -> Result<RunArtifacts> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::io(format!("reading {}", config_path.display()), e))?;
    let config = ExperimentConfig::from_toml_str(&text)?;
    let out = &config.output_dir;
    create_dir(out)?;
    let config_echo = out.join(CONFIG_ECHO);
    write(&config_echo, &text)?;

    let index = load_dataset(&config.dataset_root)?;
    let split = split_dataset(&index, config.ratios, config.seed)?;
    let split_manifest = out.join(SPLIT_MANIFEST);
    write(&split_manifest, split.to_json()? + "\n")?;
    let samples = index.load_samples(&index.ids(), config.image_size)?;

    let mut model = build_model(&config)?;
    let best_checkpoint = out.join(BEST_CHECKPOINT);
    let train_config = config.train_config();
    let target = CheckpointTarget { path: &best_checkpoint, experiment: Some(serde_json::to_value(&config)?) };
    let outcome = train_with_checkpoints(&mut model, &split, &samples, &train_config, Some(&target))?;
    let best = outcome.best;

    let log_csv = out.join(TRAINING_LOG);
    write(&log_csv, outcome.log.to_csv())?;

    let mut best_model = best.model;
    best_model.set_mode(Mode::Infer);
    let mut report_split = SplitName::Test;
    if split.ids(SplitName::Test).is_empty() {
        log::warn!("test split is empty; reporting metrics on the training split");
        report_split = SplitName::Train;
    }
    let test = select(&samples, split.ids(report_split))?;
    let mut test_report = evaluate_split(&best_model, &test, config.threshold, config.aggregation)?;
    test_report.split = Some(report_split);
    let metrics_json = out.join(METRICS_JSON);
    write(&metrics_json, test_report.to_json()? + "\n")?;

    let curve_png = out.join(CURVE_PNG);
    plot_accuracy_curves(&outcome.log, &curve_png)?;
    let confusion_png = out.join(CONFUSION_PNG);
    let matrix = test_report.confusion_matrix.unwrap_or_else(|| {
        log::warn!("test split lacks one class; confusion matrix rows left at zero");
        [[0.0; 2]; 2]
    });
    plot_confusion_matrix(&matrix, &confusion_png)?;

    let predictions_dir = out.join(PREDICTIONS_DIR);
    create_dir(&predictions_dir)?;
    let probs = predict_samples(&best_model, &test, EVAL_BATCH)?;
    for (s, p) in test.iter().zip(&probs) {
        let size = (p.width() as u32, p.height() as u32);
        write_prediction(&predictions_dir, &s.sample_id, p.data(), size, config.threshold)?;
    }
    log::info!(
        "test dice {:.4}, accuracy {:.4} ({} samples, {:?} aggregation)",
        test_report.scores.dice,
        test_report.scores.accuracy,
        test_report.samples,
        test_report.aggregation
    );
    Ok(RunArtifacts {
        config_echo,
        split_manifest,
        log_csv,
        best_checkpoint,
        metrics_json,
        curve_png,
        confusion_png,
        predictions_dir,
        log: outcome.log,
        test_report,
    })
}

/// Loads a checkpoint and checks its architecture against the experiment
/// configuration stored with it.
fn load_consistent(path: &Path) -> Result<(Checkpoint, Option<ExperimentConfig>)> {
    let ck = load_checkpoint(path, None)?;
    let experiment: Option<ExperimentConfig> = match &ck.meta.experiment {
        Some(v) => Some(
            serde_json::from_value(v.clone())
                .map_err(|e| Error::CorruptArchive(format!("experiment echo in checkpoint: {e}")))?,
        ),
        None => None,
    };
    if let Some(exp) = &experiment {
        if exp.architecture != ck.meta.architecture {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint holds a {} model but its configuration says {}",
                ck.meta.architecture, exp.architecture
            )));
        }
    }
    Ok((ck, experiment))
}

fn read_manifest(path: &Path) -> Result<SplitAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct EvaluateRequest<'a> {
    pub checkpoint: &'a Path,
    pub dataset_root: &'a Path,
    pub split: SplitName,
    pub threshold: f64,
    pub aggregation: Aggregation,
    /// Explicit split manifest; otherwise one next to the checkpoint, then
    /// one in the dataset root, is used.
    pub manifest: Option<&'a Path>,
    /// Where to write the report; defaults to `metrics_<split>.json` next to
    /// the checkpoint.
    pub out: Option<&'a Path>,
}

pub fn cmd_evaluate(req: &EvaluateRequest<'_>) -> Result<(MetricsReport, PathBuf)> {
    let (ck, experiment) = load_consistent(req.checkpoint)?;
    let ck_dir = req.checkpoint.parent().unwrap_or(Path::new("."));
    let candidates: Vec<PathBuf> = match req.manifest {
        Some(p) => vec![p.to_path_buf()],
        None => vec![ck_dir.join(SPLIT_MANIFEST), req.dataset_root.join(SPLIT_MANIFEST)],
    };
    let manifest_path = candidates.iter().find(|p| p.is_file()).ok_or_else(|| {
        Error::MissingSplitManifest(candidates.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))
    })?;
    let split = read_manifest(manifest_path)?;
    let index = load_dataset(req.dataset_root)?;
    let size = experiment.as_ref().map_or(DEFAULT_IMAGE_SIZE, |e| e.image_size);
    let samples = index.load_samples(split.ids(req.split), size)?;
    let mut model = ck.model;
    model.set_mode(Mode::Infer);
    let mut report = evaluate_split(&model, &samples, req.threshold, req.aggregation)?;
    report.split = Some(req.split);
    let out = req.out.map(Path::to_path_buf).unwrap_or_else(|| ck_dir.join(format!("metrics_{}.json", req.split)));
    write(&out, report.to_json()? + "\n")?;
    Ok((report, out))
}

/// Writes a 0/255 mask PNG for one image at the model's training size.
pub fn cmd_predict(checkpoint: &Path, image_path: &Path, out_path: &Path, threshold: f64) -> Result<GrayImage> {
    let (ck, experiment) = load_consistent(checkpoint)?;
    let size = experiment.as_ref().map_or(DEFAULT_IMAGE_SIZE, |e| e.image_size);
    let x = preprocess_image(&decode_png(image_path)?, size)?;
    let mut model = ck.model;
    model.set_mode(Mode::Infer);
    let p = model.infer(&x)?;
    let mask = binary_mask(p.data(), (size as u32, size as u32), threshold);
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_image(&mask, out_path)?;
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOutput {
    pub curve_png: PathBuf,
    pub curve: CurveSummary,
    pub confusion_png: Option<PathBuf>,
    pub heatmap_labels: Option<[[String; 2]; 2]>,
}

/// Renders the accuracy curves from a training log and, given a metrics
/// report, its confusion-matrix heatmap.
pub fn cmd_plot(log_csv: &Path, metrics_json: Option<&Path>, out_dir: &Path) -> Result<PlotOutput> {
    let log = TrainingLog::read_csv(log_csv)?;
    create_dir(out_dir)?;
    let curve_png = out_dir.join(CURVE_PNG);
    let curve = plot_accuracy_curves(&log, &curve_png)?;
    let (mut confusion_png, mut heatmap_labels) = (None, None);
    if let Some(path) = metrics_json {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        MetricsReport::validate_json(&value)?;
        let report: MetricsReport =
            serde_json::from_value(value).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let matrix = report
            .confusion_matrix
            .ok_or_else(|| Error::Schema("report has no confusion matrix (one class is absent)".into()))?;
        let p = out_dir.join(CONFUSION_PNG);
        heatmap_labels = Some(plot_confusion_matrix(&matrix, &p)?);
        confusion_png = Some(p);
    }
    Ok(PlotOutput { curve_png, curve, confusion_png, heatmap_labels })
}
