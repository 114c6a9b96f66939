//! Runs the configured stages over every dataset and writes the results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use maskfuse_core::{
    aggregate_report, ensemble_fuse, evaluate, fuse_semantic, semantic_mean_iou, suppress_grouped,
    tta_merge, DatasetMetrics, Detection, GroundTruth, ImageId, MetricsReport, PredictionSet,
    ScaleSize, SemanticMap,
};
use rayon::prelude::*;

use crate::config::{base_model, DatasetConfig, PipelineConfig, Stage, WeightsModeName};
use crate::error::{Error, Result};
use crate::formats::{
    load_ground_truth, load_predictions, load_semantic_maps, predictions_to_string, write_file,
    Diagnostic, ImageIndex, PredictionContext,
};
use crate::report::{report_json, report_table};

/// Result of running the stages on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOutcome {
    pub name: String,
    /// Id of the prediction set that was written and evaluated.
    pub model_id: String,
    pub predictions: Vec<Detection>,
    /// Present when the `evaluate` stage ran.
    pub metrics: Option<DatasetMetrics>,
    /// Present when `evaluate` ran and both semantic files are configured.
    pub semantic_miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// In configuration order.
    pub datasets: Vec<DatasetOutcome>,
    pub report: Option<MetricsReport>,
}

pub fn predictions_path(cfg: &PipelineConfig, dataset: &str) -> PathBuf {
    cfg.output_dir.join(format!("{dataset}.predictions.json"))
}

/// Runs every dataset with up to `jobs` in parallel, writes fused predictions
/// and, when evaluation ran, `report.json` and `report.txt`.
///
/// `stages` overrides the configured stage list.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    jobs: usize,
    stages: Option<&[Stage]>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let stages = stages.unwrap_or(&cfg.stages);
    if stages.is_empty() {
        return Err(Error::Config("stage list is empty".into()));
    }
    let output = compute(cfg, jobs, stages)?;
    write_outputs(cfg, &output)?;
    Ok(output)
}

/// The computation of [`run_pipeline`] without writing anything.
pub fn compute(cfg: &PipelineConfig, jobs: usize, stages: &[Stage]) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<DatasetOutcome>> = pool.install(|| {
        cfg.datasets
            .par_iter()
            .map(|d| {
                run_dataset(cfg, d, stages).map_err(|e| Error::Dataset {
                    name: d.name.clone(),
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let datasets = results.into_iter().collect::<Result<Vec<_>>>()?;

    let report = if stages.contains(&Stage::Evaluate) {
        let per = datasets
            .iter()
            .map(|d| (d.name.clone(), d.metrics.expect("evaluate ran")))
            .collect();
        let miou: Vec<(String, f64)> = datasets
            .iter()
            .filter_map(|d| d.semantic_miou.map(|v| (d.name.clone(), v)))
            .collect();
        Some(aggregate_report(per, (!miou.is_empty()).then_some(miou))?)
    } else {
        None
    };
    Ok(RunOutput { datasets, report })
}

pub fn write_outputs(cfg: &PipelineConfig, output: &RunOutput) -> Result<()> {
    for d in &output.datasets {
        write_file(
            &predictions_path(cfg, &d.name),
            &predictions_to_string(&d.predictions),
        )?;
    }
    if let Some(report) = &output.report {
        write_file(&cfg.output_dir.join("report.json"), &report_json(report))?;
        write_file(&cfg.output_dir.join("report.txt"), &report_table(report))?;
    }
    Ok(())
}

/// Everything a dataset's stages read.
pub struct DatasetInputs {
    pub gt: GroundTruth,
    /// Per model, in configuration order; weights are filled in by the ensemble.
    pub sets: IndexMap<String, PredictionSet>,
    pub semantic: Option<Vec<SemanticMap>>,
    pub semantic_gt: Option<Vec<SemanticMap>>,
}

/// Loads a dataset's files, failing on the first file with diagnostics.
pub fn load_dataset(d: &DatasetConfig) -> Result<DatasetInputs> {
    let gt = load_ground_truth(&d.gt_path)?.strict()?;
    let index = ImageIndex::from_ground_truth(&gt);
    let mut sets = IndexMap::new();
    for (model_id, path) in &d.prediction_paths {
        let ctx = PredictionContext {
            index: Some(&index),
            scale: d.scale(model_id),
        };
        let detections = load_predictions(path, ctx)?.strict()?;
        sets.insert(
            model_id.clone(),
            PredictionSet::new(model_id.clone(), 1.0, detections),
        );
    }
    let load_maps = |p: &Option<PathBuf>| -> Result<Option<Vec<SemanticMap>>> {
        p.as_deref()
            .map(|p| load_semantic_maps(p, Some(&index))?.strict())
            .transpose()
    };
    Ok(DatasetInputs {
        semantic: load_maps(&d.semantic_path)?,
        semantic_gt: load_maps(&d.semantic_gt_path)?,
        gt,
        sets,
    })
}

pub fn run_dataset(
    cfg: &PipelineConfig,
    d: &DatasetConfig,
    stages: &[Stage],
) -> Result<DatasetOutcome> {
    let inputs = load_dataset(d)?;
    run_stages(cfg, d, inputs, stages)
}

/// Applies `stages` in order to already loaded inputs.
pub fn run_stages(
    cfg: &PipelineConfig,
    d: &DatasetConfig,
    inputs: DatasetInputs,
    stages: &[Stage],
) -> Result<DatasetOutcome> {
    let DatasetInputs {
        gt,
        mut sets,
        semantic,
        semantic_gt,
    } = inputs;
    let mut metrics = None;
    let mut semantic_miou = None;

    for stage in stages {
        match stage {
            Stage::TtaMerge => sets = merge_scales(cfg, d, &gt, sets)?,
            Stage::SoftNms => {
                let nms = cfg.nms.to_core();
                sets.values_mut()
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .try_for_each(|set| -> Result<()> {
                        set.detections =
                            suppress_grouped(std::mem::take(&mut set.detections), &nms)?;
                        Ok(())
                    })?;
            }
            Stage::SemanticFusion => {
                if let Some(maps) = &semantic {
                    let primary = primary_id(cfg, d, &sets);
                    let set = &mut sets[&primary];
                    set.detections = fuse_by_image(std::mem::take(&mut set.detections), maps, cfg)?;
                }
            }
            Stage::Ensemble => {
                let explicit = cfg.ensemble.weights_mode == WeightsModeName::Explicit;
                let pooled: Vec<PredictionSet> = sets
                    .into_values()
                    .map(|mut s| {
                        if explicit {
                            s.weight = cfg.ensemble.explicit_weight(&s.model_id);
                        }
                        s
                    })
                    .collect();
                let fused = ensemble_fuse(pooled, &cfg.ensemble.to_core())?;
                sets = IndexMap::from([(
                    "ensemble".to_string(),
                    PredictionSet::new("ensemble", 1.0, fused),
                )]);
            }
            Stage::Evaluate => {
                let chosen = &sets[&primary_id(cfg, d, &sets)];
                let eval = evaluate(&chosen.detections, &gt, &cfg.eval.to_core())?;
                metrics = Some(DatasetMetrics {
                    map: eval.map,
                    mar: eval.mar,
                });
                if let (Some(pred), Some(truth)) = (&semantic, &semantic_gt) {
                    semantic_miou = Some(semantic_mean_iou(pred, truth)?);
                }
            }
        }
    }

    let model_id = primary_id(cfg, d, &sets);
    let predictions = sets
        .swap_remove(&model_id)
        .map(|s| s.detections)
        .unwrap_or_default();
    Ok(DatasetOutcome {
        name: d.name.clone(),
        model_id,
        predictions,
        metrics,
        semantic_miou,
    })
}

/// The single remaining set, else the configured primary model, else the
/// model with the highest configured mAP, else the first model.
pub fn primary_id(
    cfg: &PipelineConfig,
    d: &DatasetConfig,
    sets: &IndexMap<String, PredictionSet>,
) -> String {
    if sets.len() == 1 {
        return sets.keys().next().cloned().unwrap_or_default();
    }
    if let Some(p) = &d.primary_model {
        if sets.contains_key(p) {
            return p.clone();
        }
        if let Some(k) = sets.keys().find(|k| base_model(k) == p) {
            return k.clone();
        }
    }
    if let Some(maps) = &cfg.ensemble.model_maps {
        let best = sets
            .keys()
            .filter_map(|k| maps.get(k).map(|v| (k, *v)))
            .fold(None::<(&String, f64)>, |best, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            });
        if let Some((k, _)) = best {
            return k.clone();
        }
    }
    sets.keys().next().cloned().unwrap_or_default()
}

/// Fuses each image's detections with that image's semantic map, keeping order.
fn fuse_by_image(
    detections: Vec<Detection>,
    maps: &[SemanticMap],
    cfg: &PipelineConfig,
) -> Result<Vec<Detection>> {
    let by_image: BTreeMap<ImageId, &SemanticMap> = maps.iter().map(|m| (m.image_id, m)).collect();
    let mut groups: BTreeMap<ImageId, (Vec<usize>, Vec<Detection>)> = BTreeMap::new();
    let mut slots: Vec<Option<Detection>> = Vec::with_capacity(detections.len());
    for (i, det) in detections.into_iter().enumerate() {
        if by_image.contains_key(&det.image_id) {
            let g = groups.entry(det.image_id).or_default();
            g.0.push(i);
            g.1.push(det);
            slots.push(None);
        } else {
            slots.push(Some(det));
        }
    }
    let semantic = cfg.semantic.to_core();
    for (image_id, (positions, dets)) in groups {
        let fused = fuse_semantic(dets, by_image[&image_id], &semantic)?;
        for (pos, det) in positions.into_iter().zip(fused) {
            slots[pos] = Some(det);
        }
    }
    Ok(slots
        .into_iter()
        .map(|d| d.expect("every slot refilled"))
        .collect())
}

/// Replaces every group of scale-tagged sets sharing a base model id with one
/// merged set named after the base.
fn merge_scales(
    cfg: &PipelineConfig,
    d: &DatasetConfig,
    gt: &GroundTruth,
    sets: IndexMap<String, PredictionSet>,
) -> Result<IndexMap<String, PredictionSet>> {
    let mut groups: IndexMap<String, Vec<(Option<ScaleSize>, PredictionSet)>> = IndexMap::new();
    for (id, set) in sets {
        let scale = d.scale(&id);
        let key = if scale.is_some() {
            base_model(&id).to_string()
        } else {
            id
        };
        groups.entry(key).or_default().push((scale, set));
    }
    if groups.values().flatten().all(|(s, _)| s.is_none()) {
        return Err(Error::Config(format!(
            "dataset `{}`: tta-merge needs scale_tags",
            d.name
        )));
    }

    let ensemble = cfg.ensemble.to_core();
    let mut merged = IndexMap::new();
    for (key, members) in groups {
        if members.iter().all(|(s, _)| s.is_none()) {
            for (_, set) in members {
                merged.insert(key.clone(), set);
            }
            continue;
        }
        let mut scaled: Vec<(ScaleSize, PredictionSet)> = Vec::with_capacity(members.len());
        for (scale, set) in members {
            let scale = scale.ok_or_else(|| {
                Error::Config(format!(
                    "model `{}` shares base `{key}` with scale-tagged models but has no scale tag",
                    set.model_id
                ))
            })?;
            scaled.push((scale, set));
        }
        let mut detections = Vec::new();
        for image in &gt.images {
            let per_image: Vec<(ScaleSize, PredictionSet)> = scaled
                .iter()
                .map(|(scale, set)| {
                    let dets = set
                        .detections
                        .iter()
                        .filter(|det| det.image_id == image.id)
                        .cloned()
                        .collect();
                    (*scale, PredictionSet::new(set.model_id.clone(), 1.0, dets))
                })
                .collect();
            detections.extend(tta_merge(per_image, image.height, image.width, &ensemble)?);
        }
        merged.insert(key.clone(), PredictionSet::new(key, 1.0, detections));
    }
    Ok(merged)
}

/// Scans every configured input without running anything. An empty list
/// means the configuration is runnable.
pub fn validate_inputs(cfg: &PipelineConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if let Err(e) = cfg.validate() {
        out.push(Diagnostic::new(Path::new("<config>"), None, e.to_string()));
    }
    for d in &cfg.datasets {
        let gt = match load_ground_truth(&d.gt_path) {
            Ok(loaded) => {
                out.extend(loaded.diagnostics);
                Some(loaded.items)
            }
            Err(e) => {
                out.push(file_diagnostic(&d.gt_path, e));
                None
            }
        };
        let index = gt.as_ref().map(ImageIndex::from_ground_truth);
        for (model_id, path) in &d.prediction_paths {
            let ctx = PredictionContext {
                index: index.as_ref(),
                scale: d.scale(model_id),
            };
            match load_predictions(path, ctx) {
                Ok(loaded) => out.extend(loaded.diagnostics),
                Err(e) => out.push(file_diagnostic(path, e)),
            }
        }
        for path in d.semantic_path.iter().chain(&d.semantic_gt_path) {
            match load_semantic_maps(path, index.as_ref()) {
                Ok(loaded) => out.extend(loaded.diagnostics),
                Err(e) => out.push(file_diagnostic(path, e)),
            }
        }
    }
    out
}

fn file_diagnostic(path: &Path, e: Error) -> Diagnostic {
    let message = match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => format!("line {line}, column {column}: {message}"),
        Error::Io { source, .. } => source.to_string(),
        other => other.to_string(),
    };
    Diagnostic::new(path, None, message)
}
