//! COCO-style instance evaluation: greedy score-ordered matching per
//! `(image, category)`, 101-point interpolated average precision, and recall
//! at a per-image detection cap, averaged over an IoU threshold sweep.
//!
//! Ordering follows the reference COCO evaluator: detections within an image
//! are ranked by score with ties kept in input order, images are visited by
//! ascending id, and the cross-image ranking is a stable sort on score.
//! There are no crowd regions and no area ranges.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::detection::{CategoryId, Detection, ImageId};
use crate::error::{Error, Result};
use crate::mask::{bbox_iou, mask_iou, BBox, BinaryMask};
use crate::suppression::Overlap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: ImageId,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

/// A ground-truth instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
    pub mask: BinaryMask,
}

/// Annotated instances of one dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub images: Vec<ImageInfo>,
    pub categories: Vec<Category>,
    pub annotations: Vec<Annotation>,
}

impl GroundTruth {
    pub fn image(&self, id: ImageId) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Every annotation references a known image and category and matches
    /// its image's dimensions.
    pub fn validate(&self) -> Result<()> {
        let images: BTreeMap<ImageId, (usize, usize)> = self
            .images
            .iter()
            .map(|i| (i.id, (i.height, i.width)))
            .collect();
        let cats: BTreeSet<CategoryId> = self.categories.iter().map(|c| c.id).collect();
        for (i, a) in self.annotations.iter().enumerate() {
            let dims = images.get(&a.image_id).ok_or_else(|| {
                Error::Input(format!(
                    "annotation {i} references unknown image {}",
                    a.image_id
                ))
            })?;
            if !cats.contains(&a.category_id) {
                return Err(Error::Input(format!(
                    "annotation {i} references unknown category {}",
                    a.category_id
                )));
            }
            if a.mask.dims() != *dims {
                return Err(Error::Shape {
                    expected: *dims,
                    found: a.mask.dims(),
                });
            }
        }
        Ok(())
    }
}

/// `n` evenly spaced values from `start` to `stop` inclusive, computed the
/// way numpy's `linspace` does so threshold comparisons agree bit for bit.
fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let step = (stop - start) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * step + start).collect();
    v[n - 1] = stop;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: Vec<f64>,
    /// Per image and category, only the top-scoring detections are kept.
    pub max_detections: usize,
    pub overlap: Overlap,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thresholds: linspace(0.5, 0.95, 10),
            recall_points: linspace(0.0, 1.0, 101),
            max_detections: 100,
            overlap: Overlap::MaskIou,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("no IoU thresholds".into()));
        }
        if self.iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
            || self.iou_thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "IoU thresholds must be strictly increasing within [0, 1]: {:?}",
                self.iou_thresholds
            )));
        }
        if self.recall_points.is_empty() || self.recall_points.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(
                "recall points must be non-empty and sorted".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of matching one image's detections of one category at one threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchRecords {
    /// Detection scores in ranked order.
    pub scores: Vec<f64>,
    /// Index of the ground truth each ranked detection matched, if any.
    pub det_matches: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

impl MatchRecords {
    pub fn true_positives(&self) -> usize {
        self.det_matches.iter().filter(|m| m.is_some()).count()
    }

    pub fn num_gt(&self) -> usize {
        self.gt_matched.len()
    }
}

/// Greedy matching over a precomputed `[detection][gt]` IoU matrix. Each
/// detection, in rank order, takes the still-unmatched ground truth with the
/// highest IoU at or above the threshold; on equal IoU the later one wins.
fn greedy_match(scores: &[f64], ious: &[Vec<f64>], num_gt: usize, iou_t: f64) -> MatchRecords {
    let mut gt_matched = vec![false; num_gt];
    let det_matches = ious
        .iter()
        .map(|row| {
            let mut best = iou_t.min(1.0 - 1e-10);
            let mut hit = None;
            for (g, &iou) in row.iter().enumerate() {
                if gt_matched[g] || iou < best {
                    continue;
                }
                best = iou;
                hit = Some(g);
            }
            if let Some(g) = hit {
                gt_matched[g] = true;
            }
            hit
        })
        .collect();
    MatchRecords {
        scores: scores.to_vec(),
        det_matches,
        gt_matched,
    }
}

fn overlap_matrix(
    dets: &[&Detection],
    gts: &[&Annotation],
    overlap: Overlap,
) -> Result<Vec<Vec<f64>>> {
    dets.iter()
        .map(|d| {
            gts.iter()
                .map(|g| match overlap {
                    Overlap::MaskIou => mask_iou(&d.mask, &g.mask),
                    Overlap::BoxIou => Ok(bbox_iou(&d.bbox, &g.bbox)),
                })
                .collect()
        })
        .collect()
}

/// Ranks by score (stable), keeps the top `max_detections`.
fn rank<'a>(dets: &[&'a Detection], max_detections: usize) -> Vec<&'a Detection> {
    let mut ranked = dets.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(max_detections);
    ranked
}

/// Matches one image's detections of one category against its ground truth.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Annotation],
    iou_t: f64,
    params: &EvalParams,
) -> Result<MatchRecords> {
    let refs: Vec<&Detection> = dets.iter().collect();
    let ranked = rank(&refs, params.max_detections);
    let gt_refs: Vec<&Annotation> = gts.iter().collect();
    let ious = overlap_matrix(&ranked, &gt_refs, params.overlap)?;
    let scores: Vec<f64> = ranked.iter().map(|d| d.score).collect();
    Ok(greedy_match(&scores, &ious, gts.len(), iou_t))
}

/// Interpolated AP for one category at one threshold, from the match
/// records of every image (in image order). `None` when there is no ground
/// truth to recall.
pub fn average_precision(records: &[MatchRecords], recall_points: &[f64]) -> Option<f64> {
    let num_gt: usize = records.iter().map(MatchRecords::num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut ranked: Vec<(f64, bool)> = records
        .iter()
        .flat_map(|r| {
            r.scores
                .iter()
                .zip(&r.det_matches)
                .map(|(&s, m)| (s, m.is_some()))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, hit) in &ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }

    let mut sum = 0.0;
    let mut cursor = 0;
    for &r in recall_points {
        while cursor < recall.len() && recall[cursor] < r {
            cursor += 1;
        }
        if cursor == recall.len() {
            break;
        }
        sum += precision[cursor];
    }
    Some(sum / recall_points.len() as f64)
}

/// Per-category results, one entry per IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryEval {
    pub category_id: CategoryId,
    pub num_gt: usize,
    pub ap: Vec<f64>,
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean AP over categories with ground truth and all thresholds, in percent.
    pub map: f64,
    /// Mean recall over the same cells, in percent.
    pub mar: f64,
    /// Only categories that have ground truth.
    pub categories: Vec<CategoryEval>,
}

fn unknown_ids(predictions: &[Detection], gt: &GroundTruth) -> Option<String> {
    let images: BTreeSet<ImageId> = gt.images.iter().map(|i| i.id).collect();
    let cats: BTreeSet<CategoryId> = gt.categories.iter().map(|c| c.id).collect();
    let bad_images: BTreeSet<ImageId> = predictions
        .iter()
        .map(|d| d.image_id)
        .filter(|id| !images.contains(id))
        .collect();
    let bad_cats: BTreeSet<CategoryId> = predictions
        .iter()
        .map(|d| d.category_id)
        .filter(|id| !cats.contains(id))
        .collect();
    if bad_images.is_empty() && bad_cats.is_empty() {
        return None;
    }
    Some(format!(
        "predictions reference unknown image ids {:?} and category ids {:?}",
        bad_images, bad_cats
    ))
}

/// mAP and mAR over the threshold sweep.
pub fn evaluate(
    predictions: &[Detection],
    gt: &GroundTruth,
    params: &EvalParams,
) -> Result<Evaluation> {
    params.validate()?;
    gt.validate()?;
    if let Some(msg) = unknown_ids(predictions, gt) {
        return Err(Error::Input(msg));
    }
    let dims: BTreeMap<ImageId, (usize, usize)> = gt
        .images
        .iter()
        .map(|i| (i.id, (i.height, i.width)))
        .collect();
    if params.overlap == Overlap::MaskIou {
        if let Some(d) = predictions
            .iter()
            .find(|d| d.mask.dims() != dims[&d.image_id])
        {
            return Err(Error::Shape {
                expected: dims[&d.image_id],
                found: d.mask.dims(),
            });
        }
    }

    let mut gts: BTreeMap<(CategoryId, ImageId), Vec<&Annotation>> = BTreeMap::new();
    for a in &gt.annotations {
        gts.entry((a.category_id, a.image_id)).or_default().push(a);
    }
    let mut dts: BTreeMap<(CategoryId, ImageId), Vec<&Detection>> = BTreeMap::new();
    for d in predictions {
        dts.entry((d.category_id, d.image_id)).or_default().push(d);
    }

    let cat_ids: BTreeSet<CategoryId> = gt.categories.iter().map(|c| c.id).collect();
    let img_ids: BTreeSet<ImageId> = gt.images.iter().map(|i| i.id).collect();
    let n_t = params.iou_thresholds.len();

    let mut categories = Vec::new();
    for &cat in &cat_ids {
        let mut per_threshold: Vec<Vec<MatchRecords>> = vec![Vec::new(); n_t];
        for &img in &img_ids {
            let g = gts.get(&(cat, img)).map(Vec::as_slice).unwrap_or(&[]);
            let d = dts.get(&(cat, img)).map(Vec::as_slice).unwrap_or(&[]);
            if g.is_empty() && d.is_empty() {
                continue;
            }
            let ranked = rank(d, params.max_detections);
            let ious = overlap_matrix(&ranked, g, params.overlap)?;
            let scores: Vec<f64> = ranked.iter().map(|d| d.score).collect();
            for (t, &iou_t) in params.iou_thresholds.iter().enumerate() {
                per_threshold[t].push(greedy_match(&scores, &ious, g.len(), iou_t));
            }
        }
        let num_gt: usize = per_threshold[0].iter().map(MatchRecords::num_gt).sum();
        if num_gt == 0 {
            continue;
        }
        let ap = per_threshold
            .iter()
            .map(|recs| average_precision(recs, &params.recall_points).unwrap_or(0.0))
            .collect();
        let recall = per_threshold
            .iter()
            .map(|recs| {
                recs.iter().map(MatchRecords::true_positives).sum::<usize>() as f64 / num_gt as f64
            })
            .collect();
        categories.push(CategoryEval {
            category_id: cat,
            num_gt,
            ap,
            recall,
        });
    }

    let cells = (categories.len() * n_t) as f64;
    let mean = |f: fn(&CategoryEval) -> &Vec<f64>| -> f64 {
        if categories.is_empty() {
            0.0
        } else {
            100.0 * categories.iter().flat_map(|c| f(c).iter()).sum::<f64>() / cells
        }
    };
    Ok(Evaluation {
        map: mean(|c| &c.ap),
        mar: mean(|c| &c.recall),
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: usize, y: usize, side: usize) -> (BBox, BinaryMask) {
        let b = BBox::new(x as f64, y as f64, side as f64, side as f64);
        (b, BinaryMask::from_box(10, 10, &b))
    }

    fn det(score: f64, x: usize, y: usize, side: usize) -> Detection {
        let (b, m) = square(x, y, side);
        Detection::new(1, 1, score, b, m)
    }

    fn ann(x: usize, y: usize, side: usize) -> Annotation {
        let (bbox, mask) = square(x, y, side);
        Annotation {
            image_id: 1,
            category_id: 1,
            bbox,
            mask,
        }
    }

    fn gt(annotations: Vec<Annotation>) -> GroundTruth {
        GroundTruth {
            images: vec![ImageInfo {
                id: 1,
                height: 10,
                width: 10,
            }],
            categories: vec![Category {
                id: 1,
                name: "defect".into(),
            }],
            annotations,
        }
    }

    #[test]
    fn default_thresholds() {
        let p = EvalParams::default();
        assert_eq!(p.iou_thresholds.len(), 10);
        assert_eq!(p.iou_thresholds[0], 0.5);
        assert_eq!(p.iou_thresholds[9], 0.95);
        assert!((p.iou_thresholds[3] - 0.65).abs() < 1e-12);
        assert_eq!(p.recall_points.len(), 101);
        assert_eq!(p.recall_points[100], 1.0);
    }

    #[test]
    fn identical_detection_is_tp() {
        let p = EvalParams::default();
        for &t in &[0.5, 0.95, 1.0] {
            let r = match_detections(&[det(0.9, 0, 0, 3)], &[ann(0, 0, 3)], t, &p).unwrap();
            assert_eq!(r.det_matches, vec![Some(0)]);
        }
    }

    #[test]
    fn second_duplicate_is_fp() {
        let p = EvalParams::default();
        let r = match_detections(
            &[det(0.8, 0, 0, 3), det(0.9, 0, 0, 3)],
            &[ann(0, 0, 3)],
            0.5,
            &p,
        )
        .unwrap();
        assert_eq!(r.scores, vec![0.9, 0.8]);
        assert_eq!(r.det_matches, vec![Some(0), None]);
        assert_eq!(r.gt_matched, vec![true]);
    }

    #[test]
    fn below_threshold_leaves_gt_unmatched() {
        let g = Annotation {
            image_id: 1,
            category_id: 1,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            mask: BinaryMask::full(10, 10),
        };
        let d = Detection::new(
            1,
            1,
            0.9,
            BBox::new(0.0, 0.0, 10.0, 10.0),
            BinaryMask::from_fn(10, 10, |r, c| r < 4 || (r == 4 && c < 5)),
        );
        assert_eq!(mask_iou(&d.mask, &g.mask).unwrap(), 0.45);
        let r = match_detections(&[d], &[g], 0.5, &EvalParams::default()).unwrap();
        assert_eq!(r.det_matches, vec![None]);
        assert_eq!(r.gt_matched, vec![false]);
    }

    #[test]
    fn ap_examples() {
        let pts = EvalParams::default().recall_points;
        let perfect = MatchRecords {
            scores: vec![0.9, 0.8],
            det_matches: vec![Some(0), Some(1)],
            gt_matched: vec![true, true],
        };
        assert_eq!(average_precision(&[perfect], &pts), Some(1.0));

        let nothing = MatchRecords {
            gt_matched: vec![false],
            ..MatchRecords::default()
        };
        assert_eq!(average_precision(&[nothing], &pts), Some(0.0));

        let half = MatchRecords {
            scores: vec![0.9, 0.8],
            det_matches: vec![Some(0), None],
            gt_matched: vec![true, false],
        };
        let ap = average_precision(&[half], &pts).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-12);

        assert_eq!(average_precision(&[MatchRecords::default()], &pts), None);
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let truth = gt(vec![ann(0, 0, 3), ann(5, 5, 4)]);
        let preds: Vec<Detection> = truth
            .annotations
            .iter()
            .map(|a| Detection::new(1, 1, 1.0, a.bbox, a.mask.clone()))
            .collect();
        let e = evaluate(&preds, &truth, &EvalParams::default()).unwrap();
        assert_eq!((e.map, e.mar), (100.0, 100.0));
        let e = evaluate(&[], &truth, &EvalParams::default()).unwrap();
        assert_eq!((e.map, e.mar), (0.0, 0.0));
    }

    #[test]
    fn evaluate_rejects_unknown_ids() {
        let truth = gt(vec![ann(0, 0, 3)]);
        let mut d = det(0.5, 0, 0, 3);
        d.image_id = 42;
        d.category_id = 9;
        let err = evaluate(&[d], &truth, &EvalParams::default()).unwrap_err();
        match err {
            Error::Input(msg) => assert!(msg.contains("42") && msg.contains('9')),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn categories_without_gt_are_excluded() {
        let mut truth = gt(vec![ann(0, 0, 3)]);
        truth.categories.push(Category {
            id: 2,
            name: "unused".into(),
        });
        let mut stray = det(0.3, 5, 5, 2);
        stray.category_id = 2;
        let e = evaluate(&[det(0.9, 0, 0, 3), stray], &truth, &EvalParams::default()).unwrap();
        assert_eq!(e.categories.len(), 1);
        assert_eq!(e.map, 100.0);
    }

    #[test]
    fn max_detections_truncates_per_image() {
        let truth = gt(vec![ann(0, 0, 3), ann(5, 5, 4)]);
        let preds = vec![det(0.9, 0, 0, 3), det(0.8, 5, 5, 4)];
        let params = EvalParams {
            max_detections: 1,
            ..EvalParams::default()
        };
        let e = evaluate(&preds, &truth, &params).unwrap();
        assert_eq!(e.mar, 50.0);
    }

    #[test]
    fn box_overlap_mode() {
        let truth = gt(vec![ann(0, 0, 4)]);
        let mut d = det(0.9, 0, 0, 4);
        d.mask = BinaryMask::new(10, 10);
        let params = EvalParams {
            overlap: Overlap::BoxIou,
            ..EvalParams::default()
        };
        assert_eq!(evaluate(&[d.clone()], &truth, &params).unwrap().map, 100.0);
        assert_eq!(
            evaluate(&[d], &truth, &EvalParams::default()).unwrap().map,
            0.0
        );
    }

    #[test]
    fn params_validation() {
        let p = EvalParams {
            iou_thresholds: vec![0.5, 0.5],
            ..EvalParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
