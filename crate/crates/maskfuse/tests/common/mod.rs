#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use maskfuse::config::PipelineConfig;
use maskfuse::formats::{PredictionRecord, RleJson};
use maskfuse_core::{BBox, BinaryMask, Detection};
use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The committed three-model config, writing into `out`.
pub fn pipeline_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixtures().join("pipeline/config.json")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> PathBuf {
    fs::write(path, serde_json::to_string(value).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn write_config(dir: &Path, cfg: &PipelineConfig) -> PathBuf {
    write_json(&dir.join("config.json"), cfg)
}

pub fn square(
    image_id: u64,
    category_id: u64,
    score: f64,
    x: usize,
    y: usize,
    side: usize,
    dim: usize,
) -> Detection {
    let b = BBox::new(x as f64, y as f64, side as f64, side as f64);
    Detection::new(
        image_id,
        category_id,
        score,
        b,
        BinaryMask::from_box(dim, dim, &b),
    )
}

pub fn predictions_value(dets: &[Detection]) -> Value {
    serde_json::to_value(
        dets.iter()
            .map(PredictionRecord::from_detection)
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

/// Ground truth made of the given detections' masks, one image per distinct id.
pub fn ground_truth_value(dets: &[Detection], dim: usize) -> Value {
    let mut ids: Vec<u64> = dets.iter().map(|d| d.image_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut cats: Vec<u64> = dets.iter().map(|d| d.category_id).collect();
    cats.sort_unstable();
    cats.dedup();
    json!({
        "images": ids.iter().map(|id| json!({"id": id, "height": dim, "width": dim})).collect::<Vec<_>>(),
        "categories": cats.iter().map(|id| json!({"id": id, "name": format!("c{id}")})).collect::<Vec<_>>(),
        "annotations": dets.iter().enumerate().map(|(i, d)| json!({
            "id": i + 1,
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": d.bbox.to_xywh(),
            "segmentation": RleJson::from_mask(&d.mask),
            "iscrowd": 0,
        })).collect::<Vec<_>>(),
    })
}

/// Disjoint squares over two images and two categories.
pub fn tidy_scene() -> Vec<Detection> {
    let mut v = Vec::new();
    for image in 1..=2 {
        for (k, (x, y)) in [(0, 0), (8, 0), (0, 8), (8, 8)].into_iter().enumerate() {
            v.push(square(
                image,
                k as u64 % 2 + 1,
                0.9 - 0.1 * k as f64,
                x,
                y,
                5,
                16,
            ));
        }
    }
    v
}

/// A one-dataset config over files already in `dir`.
pub fn single_dataset_config(dir: &Path, models: &[(&str, &str)], stages: Value) -> PipelineConfig {
    let value = json!({
        "datasets": [{
            "name": "tidy",
            "gt_path": "gt.json",
            "prediction_paths": models.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        }],
        "stages": stages,
        "output_dir": "out",
    });
    let path = write_json(&dir.join("config.json"), &value);
    PipelineConfig::load(&path).unwrap()
}
