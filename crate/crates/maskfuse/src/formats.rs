//! JSON interchange formats.
//!
//! Ground truth uses the COCO annotation layout; predictions are an array of
//! `{image_id, category_id, score, bbox, segmentation}` records; semantic maps
//! are an array of `{image_id, segmentation}` records. Every mask is an
//! uncompressed column-major RLE: `{"size": [H, W], "counts": [...]}`.
//!
//! Loaders never stop at the first bad record. They return what decoded
//! cleanly together with a [`Diagnostic`] per rejected record, so the same
//! code backs both `validate` and strict loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use maskfuse_core::{
    bbox_from_mask, rle_decode, rle_encode, Annotation, BBox, BinaryMask, Category, CategoryId,
    Detection, GroundTruth, ImageId, ImageInfo, RleMask, ScaleSize, SemanticMap,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One problem found in an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: PathBuf,
    /// Index of the offending record within its array, if any.
    pub record: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(file: &Path, record: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            file: file.to_path_buf(),
            record,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            Some(i) => write!(f, "{}: record {i}: {}", self.file.display(), self.message),
            None => write!(f, "{}: {}", self.file.display(), self.message),
        }
    }
}

/// Turns a non-empty diagnostic list into a validation error.
pub fn into_result(diagnostics: Vec<Diagnostic>) -> Result<()> {
    if diagnostics.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
    Err(Error::Validation(lines.join("\n")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleJson {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u32>,
}

impl RleJson {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let rle = rle_encode(mask);
        Self {
            size: [rle.height, rle.width],
            counts: rle.counts,
        }
    }

    pub fn decode(&self) -> maskfuse_core::Result<BinaryMask> {
        rle_decode(&RleMask {
            height: self.size[0],
            width: self.size[1],
            counts: self.counts.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub id: CategoryId,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(default)]
    pub id: Option<u64>,
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub segmentation: RleJson,
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    pub segmentation: RleJson,
}

impl PredictionRecord {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            image_id: d.image_id,
            category_id: d.category_id,
            score: d.score,
            bbox: Some(d.bbox.to_xywh()),
            segmentation: RleJson::from_mask(&d.mask),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticRecord {
    pub image_id: ImageId,
    pub segmentation: RleJson,
}

/// Image sizes and category ids of a dataset, for cross-referencing.
#[derive(Debug, Clone, Default)]
pub struct ImageIndex {
    pub dims: BTreeMap<ImageId, (usize, usize)>,
    pub categories: BTreeSet<CategoryId>,
}

impl ImageIndex {
    pub fn from_ground_truth(gt: &GroundTruth) -> Self {
        Self {
            dims: gt
                .images
                .iter()
                .map(|i| (i.id, (i.height, i.width)))
                .collect(),
            categories: gt.categories.iter().map(|c| c.id).collect(),
        }
    }
}

/// A loader's output: the records that passed, plus complaints about the rest.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: T,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Loaded<T> {
    pub fn strict(self) -> Result<T> {
        into_result(self.diagnostics)?;
        Ok(self.items)
    }
}

/// Reads and parses a JSON document; syntax errors carry line and column.
pub fn read_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn decode_records<T: DeserializeOwned>(
    path: &Path,
    value: Value,
    what: &str,
    diagnostics: &mut Vec<Diagnostic>,
) -> Vec<(usize, T)> {
    let Value::Array(items) = value else {
        diagnostics.push(Diagnostic::new(
            path,
            None,
            format!("{what} must be a JSON array"),
        ));
        return Vec::new();
    };
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, v)| match serde_json::from_value::<T>(v) {
            Ok(t) => Some((i, t)),
            Err(e) => {
                diagnostics.push(Diagnostic::new(path, Some(i), format!("{what}: {e}")));
                None
            }
        })
        .collect()
}

fn check_box(bbox: [f64; 4], (h, w): (usize, usize)) -> Option<String> {
    let b = BBox::from_xywh(bbox);
    if bbox.iter().any(|v| !v.is_finite()) || !b.within(h, w) {
        Some(format!("bbox {bbox:?} outside {h}x{w} image"))
    } else {
        None
    }
}

fn decode_mask(
    seg: &RleJson,
    expected: Option<(usize, usize)>,
) -> std::result::Result<BinaryMask, String> {
    if let Some(dims) = expected {
        if (seg.size[0], seg.size[1]) != dims {
            return Err(format!(
                "segmentation size {}x{} does not match expected {}x{}",
                seg.size[0], seg.size[1], dims.0, dims.1
            ));
        }
    }
    seg.decode().map_err(|e| e.to_string())
}

pub fn parse_ground_truth(path: &Path, value: Value) -> Loaded<GroundTruth> {
    let mut diagnostics = Vec::new();
    let field = |name: &str| match &value {
        Value::Object(map) => map.get(name).cloned().unwrap_or(Value::Array(Vec::new())),
        _ => Value::Null,
    };
    let (images_v, cats_v, anns_v) = (field("images"), field("categories"), field("annotations"));
    if !value.is_object() {
        diagnostics.push(Diagnostic::new(
            path,
            None,
            "ground truth must be a JSON object",
        ));
    }

    let images: Vec<ImageInfo> =
        decode_records::<ImageRecord>(path, images_v, "image", &mut diagnostics)
            .into_iter()
            .map(|(_, r)| ImageInfo {
                id: r.id,
                height: r.height,
                width: r.width,
            })
            .collect();
    let categories: Vec<Category> =
        decode_records::<CategoryRecord>(path, cats_v, "category", &mut diagnostics)
            .into_iter()
            .map(|(_, r)| Category {
                id: r.id,
                name: r.name,
            })
            .collect();

    let mut seen = BTreeSet::new();
    for img in &images {
        if !seen.insert(img.id) {
            diagnostics.push(Diagnostic::new(
                path,
                None,
                format!("duplicate image id {}", img.id),
            ));
        }
    }
    let index = ImageIndex {
        dims: images.iter().map(|i| (i.id, (i.height, i.width))).collect(),
        categories: categories.iter().map(|c| c.id).collect(),
    };

    let mut annotations = Vec::new();
    for (i, rec) in decode_records::<AnnotationRecord>(path, anns_v, "annotation", &mut diagnostics)
    {
        let mut complain = |msg: String| diagnostics.push(Diagnostic::new(path, Some(i), msg));
        let Some(&dims) = index.dims.get(&rec.image_id) else {
            complain(format!(
                "annotation references unknown image {}",
                rec.image_id
            ));
            continue;
        };
        if !index.categories.contains(&rec.category_id) {
            complain(format!(
                "annotation references unknown category {}",
                rec.category_id
            ));
            continue;
        }
        if rec.iscrowd != 0 {
            complain("crowd annotations are not supported".into());
            continue;
        }
        let mask = match decode_mask(&rec.segmentation, Some(dims)) {
            Ok(m) => m,
            Err(msg) => {
                complain(msg);
                continue;
            }
        };
        if let Some(msg) = rec.bbox.and_then(|b| check_box(b, dims)) {
            complain(msg);
            continue;
        }
        let bbox = rec
            .bbox
            .map(BBox::from_xywh)
            .unwrap_or_else(|| bbox_from_mask(&mask));
        annotations.push(Annotation {
            image_id: rec.image_id,
            category_id: rec.category_id,
            bbox,
            mask,
        });
    }

    Loaded {
        items: GroundTruth {
            images,
            categories,
            annotations,
        },
        diagnostics,
    }
}

pub fn load_ground_truth(path: &Path) -> Result<Loaded<GroundTruth>> {
    Ok(parse_ground_truth(path, read_value(path)?))
}

/// What prediction masks are checked against.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredictionContext<'a> {
    /// Known images and categories; without it ids are not cross-checked and
    /// masks keep whatever size their RLE declares.
    pub index: Option<&'a ImageIndex>,
    /// Every mask is at this inference size instead of its image's size.
    pub scale: Option<ScaleSize>,
}

pub fn parse_predictions(
    path: &Path,
    value: Value,
    ctx: PredictionContext<'_>,
) -> Loaded<Vec<Detection>> {
    let mut diagnostics = Vec::new();
    let records = decode_records::<PredictionRecord>(path, value, "prediction", &mut diagnostics);
    let mut detections = Vec::with_capacity(records.len());
    for (i, rec) in records {
        let mut complain = |msg: String| diagnostics.push(Diagnostic::new(path, Some(i), msg));
        if !(0.0..=1.0).contains(&rec.score) {
            complain(format!("score {} outside [0, 1]", rec.score));
            continue;
        }
        let mut expected = ctx.scale.map(|s| (s.height, s.width));
        if let Some(index) = ctx.index {
            let Some(&dims) = index.dims.get(&rec.image_id) else {
                complain(format!(
                    "prediction references image {} absent from ground truth",
                    rec.image_id
                ));
                continue;
            };
            if !index.categories.contains(&rec.category_id) {
                complain(format!(
                    "prediction references category {} absent from ground truth",
                    rec.category_id
                ));
                continue;
            }
            expected.get_or_insert(dims);
        }
        let mask = match decode_mask(&rec.segmentation, expected) {
            Ok(m) => m,
            Err(msg) => {
                complain(msg);
                continue;
            }
        };
        if let Some(msg) = rec.bbox.and_then(|b| check_box(b, mask.dims())) {
            complain(msg);
            continue;
        }
        let bbox = rec
            .bbox
            .map(BBox::from_xywh)
            .unwrap_or_else(|| bbox_from_mask(&mask));
        detections.push(Detection::new(
            rec.image_id,
            rec.category_id,
            rec.score,
            bbox,
            mask,
        ));
    }
    Loaded {
        items: detections,
        diagnostics,
    }
}

pub fn load_predictions(path: &Path, ctx: PredictionContext<'_>) -> Result<Loaded<Vec<Detection>>> {
    Ok(parse_predictions(path, read_value(path)?, ctx))
}

pub fn parse_semantic_maps(
    path: &Path,
    value: Value,
    index: Option<&ImageIndex>,
) -> Loaded<Vec<SemanticMap>> {
    let mut diagnostics = Vec::new();
    let mut seen = BTreeSet::new();
    let mut maps = Vec::new();
    for (i, rec) in decode_records::<SemanticRecord>(path, value, "semantic map", &mut diagnostics)
    {
        let mut complain = |msg: String| diagnostics.push(Diagnostic::new(path, Some(i), msg));
        let expected = match index {
            Some(index) => match index.dims.get(&rec.image_id) {
                Some(&dims) => Some(dims),
                None => {
                    complain(format!(
                        "semantic map for image {} absent from ground truth",
                        rec.image_id
                    ));
                    continue;
                }
            },
            None => None,
        };
        if !seen.insert(rec.image_id) {
            complain(format!("second semantic map for image {}", rec.image_id));
            continue;
        }
        match decode_mask(&rec.segmentation, expected) {
            Ok(mask) => maps.push(SemanticMap {
                image_id: rec.image_id,
                mask,
            }),
            Err(msg) => complain(msg),
        }
    }
    Loaded {
        items: maps,
        diagnostics,
    }
}

pub fn load_semantic_maps(
    path: &Path,
    index: Option<&ImageIndex>,
) -> Result<Loaded<Vec<SemanticMap>>> {
    Ok(parse_semantic_maps(path, read_value(path)?, index))
}

/// Prediction array with one record per line.
pub fn predictions_to_string(detections: &[Detection]) -> String {
    let mut out = String::from("[");
    for (i, d) in detections.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let rec = PredictionRecord::from_detection(d);
        out.push_str(&serde_json::to_string(&rec).expect("prediction records always serialize"));
    }
    out.push_str("\n]\n");
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}
