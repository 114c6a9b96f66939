//! Supplementing instance masks with pixels from a binary semantic
//! (defect vs. background) segmentation.
//!
//! An instance whose score exceeds `tau1` absorbs the semantic defect pixels
//! in its region; the instance keeps its category and score. Lower-scoring
//! instances pass through untouched.

use alloc::format;
use alloc::vec::Vec;

use crate::detection::{Detection, ImageId};
use crate::error::{Error, Result};
use crate::mask::{bbox_from_mask, mask_intersection, mask_union, BinaryMask};

/// Per-pixel defect map for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub image_id: ImageId,
    pub mask: BinaryMask,
}

/// Which semantic pixels an instance may absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionRule {
    /// Only pixels whose centre lies inside the instance's box.
    #[default]
    BboxClip,
    /// Any defect pixel in the image.
    WholeImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticFusionConfig {
    pub tau1: f64,
    pub region_rule: RegionRule,
}

impl Default for SemanticFusionConfig {
    fn default() -> Self {
        Self {
            tau1: 0.5,
            region_rule: RegionRule::BboxClip,
        }
    }
}

impl SemanticFusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau1) {
            return Err(Error::Config(format!("tau1 {} outside [0, 1]", self.tau1)));
        }
        Ok(())
    }
}

/// Unions each confident instance's mask with the semantic defects in its region.
///
/// When pixels are added, the box grows to enclose the new mask; it never
/// shrinks. A semantic pixel inside several boxes goes to all of them.
pub fn fuse_semantic(
    instances: Vec<Detection>,
    semantic: &SemanticMap,
    cfg: &SemanticFusionConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    for d in &instances {
        if d.image_id != semantic.image_id {
            return Err(Error::Contract(format!(
                "instance for image {} fused with semantic map of image {}",
                d.image_id, semantic.image_id
            )));
        }
        if d.mask.dims() != semantic.mask.dims() {
            return Err(Error::Shape {
                expected: semantic.mask.dims(),
                found: d.mask.dims(),
            });
        }
    }

    let (h, w) = semantic.mask.dims();
    instances
        .into_iter()
        .map(|mut d| {
            if d.score <= cfg.tau1 {
                return Ok(d);
            }
            let fused = match cfg.region_rule {
                RegionRule::WholeImage => mask_union(&d.mask, &semantic.mask)?,
                RegionRule::BboxClip => {
                    let region = BinaryMask::from_box(h, w, &d.bbox);
                    mask_union(&d.mask, &mask_intersection(&semantic.mask, &region)?)?
                }
            };
            if fused != d.mask {
                d.bbox = d.bbox.hull(&bbox_from_mask(&fused));
                d.mask = fused;
            }
            Ok(d)
        })
        .collect()
}
