//! The commands behind the `segunet` binary: prepare, train, evaluate,
//! predict and plot.

mod commands;
mod config;
mod font;
mod plot;

pub use commands::{
    cmd_evaluate, cmd_plot, cmd_predict, cmd_prepare, cmd_train, DatasetSummary, EvaluateRequest, PlotOutput,
    PrepareOutput, RunArtifacts, BEST_CHECKPOINT, CONFIG_ECHO, CONFUSION_PNG, CURVE_PNG, DATASET_SUMMARY, METRICS_JSON,
    PREDICTIONS_DIR, SPLIT_MANIFEST, TRAINING_LOG,
};
pub use config::ExperimentConfig;
pub use plot::{heatmap_labels, plot_accuracy_curves, plot_confusion_matrix, CurveSummary};
