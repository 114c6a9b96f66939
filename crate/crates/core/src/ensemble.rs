//! Multi-model ensembling: scale each model's confidences by a weight that
//! grows with the model's mask mAP, pool everything, and remove duplicates
//! with mask-IoU NMS. Multi-scale test-time predictions go through the same
//! path after being resampled to the original resolution.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::detection::{Detection, ImageId};
use crate::error::{Error, Result};
use crate::mask::mask_resize;
use crate::suppression::{suppress_grouped, NmsConfig, Overlap};

/// All detections of one model, or of one model at one test scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    /// Confidence multiplier used in [`WeightsMode::Explicit`].
    pub weight: f64,
    pub detections: Vec<Detection>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, weight: f64, detections: Vec<Detection>) -> Self {
        Self {
            model_id: model_id.into(),
            weight,
            detections,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightsMode {
    /// Use each set's own `weight`.
    #[default]
    Explicit,
    /// Derive weights from `model_maps` with [`derive_weights`].
    MapNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub weights_mode: WeightsMode,
    /// model_id → mask mAP (percent).
    pub model_maps: Option<BTreeMap<String, f64>>,
    /// Duplicate removal; the overlap is always mask IoU.
    pub nms: NmsConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            weights_mode: WeightsMode::Explicit,
            model_maps: None,
            nms: NmsConfig::hard(Overlap::MaskIou, 0.5),
        }
    }
}

/// `weight_m = mAP_m / max_k mAP_k`, so the strongest model keeps its scores.
pub fn derive_weights(model_maps: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    if let Some((id, v)) = model_maps
        .iter()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Config(format!("model {id} has invalid mAP {v}")));
    }
    let max = model_maps.values().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::Config(
            "map-normalized weights need at least one positive mAP".into(),
        ));
    }
    Ok(model_maps
        .iter()
        .map(|(id, v)| (id.clone(), v / max))
        .collect())
}

fn resolve_weights(sets: &[PredictionSet], cfg: &EnsembleConfig) -> Result<Vec<f64>> {
    let weights: Vec<f64> = match cfg.weights_mode {
        WeightsMode::Explicit => sets.iter().map(|s| s.weight).collect(),
        WeightsMode::MapNormalized => {
            let maps = cfg
                .model_maps
                .as_ref()
                .ok_or_else(|| Error::Config("map-normalized weights need model_maps".into()))?;
            let derived = derive_weights(maps)?;
            sets.iter()
                .map(|s| {
                    derived.get(&s.model_id).copied().ok_or_else(|| {
                        Error::Config(format!("no mAP given for model {}", s.model_id))
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    for (set, w) in sets.iter().zip(&weights) {
        if !(*w >= 0.0 && w.is_finite()) {
            return Err(Error::Config(format!(
                "model {} has unresolved weight {w}",
                set.model_id
            )));
        }
    }
    Ok(weights)
}

/// Reweights, pools and deduplicates detections from several models.
///
/// Pooled detections are put in a canonical order (score descending, then
/// model id, then position within the model's set) before suppression, so
/// the order of `sets` does not affect the result.
pub fn ensemble_fuse(sets: Vec<PredictionSet>, cfg: &EnsembleConfig) -> Result<Vec<Detection>> {
    let weights = resolve_weights(&sets, cfg)?;

    let mut dims: BTreeMap<ImageId, (usize, usize)> = BTreeMap::new();
    for d in sets.iter().flat_map(|s| &s.detections) {
        let seen = *dims.entry(d.image_id).or_insert(d.mask.dims());
        if seen != d.mask.dims() {
            return Err(Error::Contract(format!(
                "image {} has masks of {}x{} and {}x{}",
                d.image_id,
                seen.0,
                seen.1,
                d.mask.height(),
                d.mask.width()
            )));
        }
    }

    let mut pooled: Vec<(String, usize, Detection)> = Vec::new();
    for (set, w) in sets.into_iter().zip(weights) {
        let model_id = set.model_id;
        for (i, mut d) in set.detections.into_iter().enumerate() {
            d.score = (d.score * w).clamp(0.0, 1.0);
            pooled.push((model_id.clone(), i, d));
        }
    }
    pooled.sort_by(|a, b| {
        b.2.score
            .total_cmp(&a.2.score)
            .then_with(|| a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let nms = NmsConfig {
        overlap: Overlap::MaskIou,
        ..cfg.nms
    };
    suppress_grouped(pooled.into_iter().map(|(_, _, d)| d).collect(), &nms)
}

/// Height and width of the input a prediction set was inferred at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScaleSize {
    pub height: usize,
    pub width: usize,
}

impl ScaleSize {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }
}

/// Brings multi-scale predictions back to `original_h x original_w` and
/// fuses them with equal weights.
pub fn tta_merge(
    scaled_sets: Vec<(ScaleSize, PredictionSet)>,
    original_h: usize,
    original_w: usize,
    cfg: &EnsembleConfig,
) -> Result<Vec<Detection>> {
    if original_h == 0 || original_w == 0 {
        return Err(Error::Config(format!(
            "original size {original_h}x{original_w} has zero area"
        )));
    }
    let mut rescaled = Vec::with_capacity(scaled_sets.len());
    for (scale, set) in scaled_sets {
        if scale.height == 0 || scale.width == 0 {
            return Err(Error::Config(format!(
                "scale {}x{} of model {} has zero area",
                scale.height, scale.width, set.model_id
            )));
        }
        let sx = original_w as f64 / scale.width as f64;
        let sy = original_h as f64 / scale.height as f64;
        let detections = set
            .detections
            .into_iter()
            .map(|mut d| {
                if d.mask.dims() != (scale.height, scale.width) {
                    return Err(Error::Shape {
                        expected: (scale.height, scale.width),
                        found: d.mask.dims(),
                    });
                }
                d.mask = mask_resize(&d.mask, original_h, original_w);
                d.bbox = d.bbox.scaled(sx, sy).clamped(original_h, original_w);
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        let model_id = format!("{}@{}x{}", set.model_id, scale.height, scale.width);
        rescaled.push(PredictionSet::new(model_id, 1.0, detections));
    }
    let equal = EnsembleConfig {
        weights_mode: WeightsMode::Explicit,
        ..cfg.clone()
    };
    ensemble_fuse(rescaled, &equal)
}
