use alloc::format;

use crate::error::{Error, Result};
use crate::mask::{BBox, BinaryMask};

pub type ImageId = u64;
pub type CategoryId = u64;

/// One predicted instance. The mask has the dimensions of its image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub score: f64,
    pub bbox: BBox,
    pub mask: BinaryMask,
}

impl Detection {
    pub fn new(
        image_id: ImageId,
        category_id: CategoryId,
        score: f64,
        bbox: BBox,
        mask: BinaryMask,
    ) -> Self {
        Self {
            image_id,
            category_id,
            score,
            bbox,
            mask,
        }
    }

    /// Score within `[0, 1]` and box inside the mask's image bounds.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Contract(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        let (h, w) = self.mask.dims();
        if !self.bbox.within(h, w) {
            return Err(Error::Contract(format!(
                "box {:?} outside {h}x{w} image",
                self.bbox.to_xywh()
            )));
        }
        Ok(())
    }
}
