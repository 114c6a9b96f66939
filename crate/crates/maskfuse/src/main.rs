use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maskfuse::config::{
    parse_stage_list, EvalOverlap, EvalSection, MethodName, NmsSection, OverlapName,
};
use maskfuse::formats::{
    load_ground_truth, load_predictions, predictions_to_string, write_file, ImageIndex,
    PredictionContext,
};
use maskfuse::report::report_table;
use maskfuse::{run_pipeline, validate_inputs, Error, PipelineConfig, Result};
use maskfuse_core::{evaluate, suppress_grouped};
use serde::Serialize;

/// Post-processing and evaluation for instance segmentation predictions.
#[derive(Debug, Parser)]
#[command(name = "maskfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured pipeline and write predictions and the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Datasets processed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated stages replacing the configured list.
        #[arg(long)]
        stage_override: Option<String>,
    },
    /// Check every input file referenced by a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a prediction file against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_detections: usize,
        #[arg(long, value_enum, default_value_t = EvalOverlap::Mask)]
        overlap: EvalOverlap,
    },
    /// Apply NMS or SoftNMS to a prediction file.
    Nms {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodName::SoftGaussian)]
        method: MethodName,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0.3)]
        iou_threshold: f64,
        #[arg(long, default_value_t = 0.001)]
        prune_threshold: f64,
        #[arg(long, value_enum, default_value_t = OverlapName::BoxIou)]
        overlap: OverlapName,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct EvalSummary {
    map: f64,
    mar: f64,
    categories: Vec<CategorySummary>,
}

#[derive(Serialize)]
struct CategorySummary {
    category_id: u64,
    num_gt: usize,
    ap: f64,
    recall: f64,
}

/// Writes to standard output, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn run(config: &Path, jobs: usize, stage_override: Option<&str>) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let stages = stage_override.map(parse_stage_list).transpose()?;
    let output = run_pipeline(&cfg, jobs, stages.as_deref())?;
    match &output.report {
        Some(report) => emit(&report_table(report))?,
        None => {
            for d in &output.datasets {
                eprintln!("{}: {} predictions", d.name, d.predictions.len());
            }
        }
    }
    Ok(())
}

fn validate(config: &Path) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let diagnostics = validate_inputs(&cfg);
    if diagnostics.is_empty() {
        return emit("ok\n");
    }
    let listing: String = diagnostics.iter().map(|d| format!("{d}\n")).collect();
    emit(&listing)?;
    Err(Error::Validation(format!(
        "{} problem(s) found",
        diagnostics.len()
    )))
}

fn eval(gt: &Path, pred: &Path, max_detections: usize, overlap: EvalOverlap) -> Result<()> {
    let gt = load_ground_truth(gt)?.strict()?;
    let index = ImageIndex::from_ground_truth(&gt);
    let ctx = PredictionContext {
        index: Some(&index),
        scale: None,
    };
    let detections = load_predictions(pred, ctx)?.strict()?;
    let params = EvalSection {
        max_detections,
        overlap,
    }
    .to_core();
    let e = evaluate(&detections, &gt, &params)?;
    let summary = EvalSummary {
        map: e.map,
        mar: e.mar,
        categories: e
            .categories
            .iter()
            .map(|c| CategorySummary {
                category_id: c.category_id,
                num_gt: c.num_gt,
                ap: 100.0 * mean(&c.ap),
                recall: 100.0 * mean(&c.recall),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    emit(&text)
}

fn nms(pred: &Path, section: NmsSection, out: Option<&Path>) -> Result<()> {
    let cfg = section.to_core();
    cfg.validate()?;
    let detections = load_predictions(pred, PredictionContext::default())?.strict()?;
    let kept = suppress_grouped(detections, &cfg)?;
    let text = predictions_to_string(&kept);
    match out {
        Some(path) => write_file(path, &text),
        None => emit(&text),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            jobs,
            stage_override,
        } => run(&config, jobs, stage_override.as_deref()),
        Command::Validate { config } => validate(&config),
        Command::Eval {
            gt,
            pred,
            max_detections,
            overlap,
        } => eval(&gt, &pred, max_detections, overlap),
        Command::Nms {
            pred,
            method,
            sigma,
            iou_threshold,
            prune_threshold,
            overlap,
            out,
        } => nms(
            &pred,
            NmsSection {
                method,
                overlap,
                iou_threshold,
                sigma,
                prune_threshold,
            },
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
