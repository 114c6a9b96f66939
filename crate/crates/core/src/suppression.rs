//! Greedy duplicate removal: classic NMS and SoftNMS (linear and Gaussian
//! decay), over box IoU or mask IoU.
//!
//! Each step takes the highest-scoring remaining detection, emits it, and
//! then drops or rescores every remaining detection by its overlap with the
//! emitted one. Equal scores are resolved by input position, so the result
//! depends only on the order of the input.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::detection::{CategoryId, Detection, ImageId};
use crate::error::{Error, Result};
use crate::mask::{bbox_iou, mask_iou};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmsMethod {
    /// Drop detections overlapping the kept one by more than the threshold.
    Hard,
    /// Scale by `1 - iou` when the overlap exceeds the threshold.
    SoftLinear,
    /// Scale by `exp(-iou² / sigma)` regardless of the threshold.
    #[default]
    SoftGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    #[default]
    BoxIou,
    MaskIou,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    pub method: NmsMethod,
    pub overlap: Overlap,
    pub iou_threshold: f64,
    /// Gaussian decay width; only read by [`NmsMethod::SoftGaussian`].
    pub sigma: f64,
    /// Soft methods discard detections whose score drops below this.
    pub prune_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            method: NmsMethod::SoftGaussian,
            overlap: Overlap::BoxIou,
            iou_threshold: 0.3,
            sigma: 0.5,
            prune_threshold: 0.001,
        }
    }
}

impl NmsConfig {
    pub fn hard(overlap: Overlap, iou_threshold: f64) -> Self {
        Self {
            method: NmsMethod::Hard,
            overlap,
            iou_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::Config(format!(
                "iou_threshold {} outside [0, 1]",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(Error::Config(format!(
                "prune_threshold {} outside [0, 1]",
                self.prune_threshold
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// A kept entry of [`suppress_by`]: its input position and final score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survivor {
    pub index: usize,
    pub score: f64,
}

fn by_score_then_index(a: &Survivor, b: &Survivor) -> core::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

/// The suppression kernel over abstract items.
///
/// `overlap(i, j)` returns the IoU between items `i` and `j`. Survivors come
/// back ordered by final score, descending, then by input index.
pub fn suppress_by<F>(scores: &[f64], cfg: &NmsConfig, mut overlap: F) -> Result<Vec<Survivor>>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    cfg.validate()?;
    let soft = cfg.method != NmsMethod::Hard;
    let mut active: Vec<Survivor> = scores
        .iter()
        .enumerate()
        .map(|(index, &score)| Survivor { index, score })
        .collect();
    let mut kept = Vec::with_capacity(active.len());

    while !active.is_empty() {
        // active stays in input order, so the first maximum has the lowest index
        let mut best = 0;
        for (pos, s) in active.iter().enumerate().skip(1) {
            if s.score > active[best].score {
                best = pos;
            }
        }
        let top = active.remove(best);
        if soft && top.score < cfg.prune_threshold {
            // everything left scores no higher
            break;
        }
        kept.push(top);

        let mut next = Vec::with_capacity(active.len());
        for mut d in active {
            let ov = overlap(top.index, d.index)?;
            match cfg.method {
                NmsMethod::Hard => {
                    if ov > cfg.iou_threshold {
                        continue;
                    }
                }
                NmsMethod::SoftLinear => {
                    if ov > cfg.iou_threshold {
                        d.score *= 1.0 - ov;
                    }
                }
                NmsMethod::SoftGaussian => {
                    d.score *= libm::exp(-(ov * ov) / cfg.sigma);
                }
            }
            if soft && d.score < cfg.prune_threshold {
                continue;
            }
            next.push(d);
        }
        active = next;
    }

    kept.sort_by(by_score_then_index);
    Ok(kept)
}

fn overlap_between(a: &Detection, b: &Detection, overlap: Overlap) -> Result<f64> {
    match overlap {
        Overlap::BoxIou => Ok(bbox_iou(&a.bbox, &b.bbox)),
        Overlap::MaskIou => mask_iou(&a.mask, &b.mask),
    }
}

/// Suppresses detections of a single image, independently per category.
///
/// All detections must share one `image_id`.
pub fn suppress(detections: Vec<Detection>, cfg: &NmsConfig) -> Result<Vec<Detection>> {
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.image_id != first.image_id) {
            return Err(Error::Contract(format!(
                "suppress expects one image, got ids {} and {}",
                first.image_id, other.image_id
            )));
        }
    }
    suppress_grouped(detections, cfg)
}

/// Suppresses each `(image_id, category_id)` group independently.
///
/// The result is ordered by final score, descending, then input position.
pub fn suppress_grouped(detections: Vec<Detection>, cfg: &NmsConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let mut groups: BTreeMap<(ImageId, CategoryId), Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        groups
            .entry((d.image_id, d.category_id))
            .or_default()
            .push(i);
    }

    let mut survivors = Vec::new();
    for members in groups.values() {
        let scores: Vec<f64> = members.iter().map(|&i| detections[i].score).collect();
        let kept = suppress_by(&scores, cfg, |a, b| {
            overlap_between(
                &detections[members[a]],
                &detections[members[b]],
                cfg.overlap,
            )
        })?;
        survivors.extend(kept.into_iter().map(|s| Survivor {
            index: members[s.index],
            score: s.score,
        }));
    }
    survivors.sort_by(by_score_then_index);

    let mut slots: Vec<Option<Detection>> = detections.into_iter().map(Some).collect();
    Ok(survivors
        .into_iter()
        .filter_map(|s| {
            slots[s.index].take().map(|mut d| {
                d.score = s.score;
                d
            })
        })
        .collect())
}
