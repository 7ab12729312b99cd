//! `segunet` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use segunet::data::{Ratios, SplitName};
use segunet::exec::{set_parallelism, Parallelism};
use segunet::metrics::Aggregation;
use segunet::runner::{cmd_evaluate, cmd_plot, cmd_predict, cmd_prepare, cmd_train, EvaluateRequest};

#[derive(Parser)]
#[command(name = "segunet", version, about = "Dental radiograph segmentation: prepare, train, evaluate, predict, plot")]
struct Cli {
    /// Run every kernel on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair images with masks, split them and write the split manifest.
    Prepare {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.7)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0.1)]
        val_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        test_ratio: f64,
    },
    /// Train one experiment from its config file and write every artifact.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on one split of the dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "micro")]
        aggregation: Aggregation,
        /// Split manifest; defaults to one next to the checkpoint or in the root.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report path; defaults to metrics_<split>.json next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a binary mask PNG for one image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Render accuracy curves and, given a metrics report, the confusion matrix.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> segunet::Result<()> {
    if cli.sequential {
        set_parallelism(Parallelism::Sequential);
    }
    match cli.command {
        Command::Prepare { root, out, seed, train_ratio, val_ratio, test_ratio } => {
            let ratios = Ratios { train: train_ratio, val: val_ratio, test: test_ratio };
            let res = cmd_prepare(&root, &out, seed, ratios)?;
            println!("{}", serde_json::to_string_pretty(&res.summary)?);
            println!("manifest: {}", res.manifest_path.display());
        }
        Command::Train { config } => {
            let a = cmd_train(&config)?;
            println!("{}", a.test_report.to_json()?);
            println!("artifacts: {}", a.config_echo.parent().unwrap_or(&a.config_echo).display());
        }
        Command::Evaluate { checkpoint, root, split, threshold, aggregation, manifest, out } => {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(segunet::Error::InvalidConfig(vec![format!("threshold: must be in (0, 1), got {threshold}")]));
            }
            let req = EvaluateRequest {
                checkpoint: &checkpoint,
                dataset_root: &root,
                split,
                threshold,
                aggregation,
                manifest: manifest.as_deref(),
                out: out.as_deref(),
            };
            let (report, path) = cmd_evaluate(&req)?;
            println!("{}", report.to_json()?);
            println!("report: {}", path.display());
        }
        Command::Predict { checkpoint, image, out, threshold } => {
            cmd_predict(&checkpoint, &image, &out, threshold)?;
            println!("mask: {}", out.display());
        }
        Command::Plot { log, metrics, out } => {
            let p = cmd_plot(&log, metrics.as_deref(), &out)?;
            for (name, n) in &p.curve.series {
                println!("{name}: {n} points");
            }
            println!("curve: {}", p.curve_png.display());
            if let (Some(path), Some(labels)) = (&p.confusion_png, &p.heatmap_labels) {
                println!("confusion matrix: {} {:?}", path.display(), labels);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
