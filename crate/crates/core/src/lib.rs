//! Post-processing kernels for instance segmentation.
//!
//! Everything here is a pure function over in-memory values and builds
//! without `std`: dense bit-packed masks and their COCO run-length codec,
//! box and mask overlap, hard and soft non-maximum suppression, semantic
//! supplementation of instance masks, confidence-reweighted model ensembles,
//! multi-scale merging, and mask-based COCO-style evaluation.
//!
//! File formats, configuration and the command-line front end live in the
//! `maskfuse` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;

pub mod detection;
pub mod ensemble;
pub mod eval;
pub mod mask;
pub mod metrics;
pub mod semantic;
pub mod suppression;

pub use crate::detection::{CategoryId, Detection, ImageId};
pub use crate::ensemble::{
    derive_weights, ensemble_fuse, tta_merge, EnsembleConfig, PredictionSet, ScaleSize, WeightsMode,
};
pub use crate::error::{Error, Result};
pub use crate::eval::{
    average_precision, evaluate, match_detections, Annotation, Category, CategoryEval, EvalParams,
    Evaluation, GroundTruth, ImageInfo, MatchRecords,
};
pub use crate::mask::{
    bbox_from_mask, bbox_iou, mask_area, mask_intersection, mask_iou, mask_resize, mask_union,
    rle_decode, rle_encode, BBox, BinaryMask, RleMask,
};
pub use crate::metrics::{aggregate_report, semantic_mean_iou, DatasetMetrics, MetricsReport};
pub use crate::semantic::{fuse_semantic, RegionRule, SemanticFusionConfig, SemanticMap};
pub use crate::suppression::{
    suppress, suppress_by, suppress_grouped, NmsConfig, NmsMethod, Overlap, Survivor,
};
