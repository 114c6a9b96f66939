mod common;

use common::mask_of;
use maskfuse_core::{
    bbox_from_mask, evaluate, mask_intersection, Annotation, BBox, BinaryMask, Category, Detection,
    EvalParams, GroundTruth, ImageInfo,
};
use proptest::prelude::*;

const CELL: usize = 6;
const GRID: usize = 3;
const DIM: usize = CELL * GRID;

fn cell_region(cell: usize) -> BinaryMask {
    let (r, c) = (cell / GRID, cell % GRID);
    let b = BBox::new(
        (c * CELL) as f64,
        (r * CELL) as f64,
        CELL as f64,
        CELL as f64,
    );
    BinaryMask::from_box(DIM, DIM, &b)
}

/// A random mask confined to one grid cell.
fn cell_mask(cell: usize) -> impl Strategy<Value = BinaryMask> {
    mask_of(DIM, DIM).prop_map(move |m| mask_intersection(&m, &cell_region(cell)).unwrap())
}

/// Ground truth with at most one instance per grid cell, so no detection can
/// overlap two ground-truth instances.
fn scene() -> impl Strategy<Value = (GroundTruth, Vec<Detection>)> {
    let image = (1..=2u64, prop::collection::vec(any::<bool>(), GRID * GRID));
    prop::collection::vec(image, 1..=3)
        .prop_flat_map(|images| {
            let mut gt_parts = Vec::new();
            for (img, (cat_seed, occupied)) in images.iter().enumerate() {
                for (cell, &on) in occupied.iter().enumerate() {
                    if on {
                        gt_parts.push((img as u64 + 1, cell, (*cat_seed + cell as u64) % 2 + 1));
                    }
                }
            }
            let gt_masks: Vec<_> = gt_parts
                .iter()
                .map(|&(_, cell, _)| cell_mask(cell))
                .collect();
            let dets = prop::collection::vec(
                (
                    1..=images.len() as u64,
                    0..GRID * GRID,
                    1..=2u64,
                    0.0..=1.0f64,
                    any::<bool>(),
                ),
                0..=24,
            );
            (Just(images.len()), Just(gt_parts), gt_masks, dets)
        })
        .prop_flat_map(|(n_images, gt_parts, gt_masks, dets)| {
            // detections are either copies of a ground-truth mask or a fresh blob in some cell
            let det_masks: Vec<_> = dets
                .iter()
                .map(|&(_, cell, _, _, _)| cell_mask(cell))
                .collect();
            (
                Just(n_images),
                Just(gt_parts),
                Just(gt_masks),
                Just(dets),
                det_masks,
            )
        })
        .prop_map(|(n_images, gt_parts, gt_masks, dets, det_masks)| {
            let annotations: Vec<Annotation> = gt_parts
                .iter()
                .zip(&gt_masks)
                .filter(|(_, m)| !m.is_empty())
                .map(|(&(image_id, _, category_id), m)| Annotation {
                    image_id,
                    category_id,
                    bbox: bbox_from_mask(m),
                    mask: m.clone(),
                })
                .collect();
            let detections = dets
                .iter()
                .zip(det_masks)
                .map(|(&(image_id, cell, cat, score, copy), m)| {
                    let source = gt_parts
                        .iter()
                        .zip(&gt_masks)
                        .find(|((img, c, _), _)| *img == image_id && *c == cell);
                    let mask = match source {
                        Some((_, gm)) if copy => gm.clone(),
                        _ => m,
                    };
                    Detection::new(image_id, cat, score, bbox_from_mask(&mask), mask)
                })
                .collect();
            let gt = GroundTruth {
                images: (1..=n_images as u64)
                    .map(|id| ImageInfo {
                        id,
                        height: DIM,
                        width: DIM,
                    })
                    .collect(),
                categories: vec![
                    Category {
                        id: 1,
                        name: "a".into(),
                    },
                    Category {
                        id: 2,
                        name: "b".into(),
                    },
                ],
                annotations,
            };
            (gt, detections)
        })
}

fn distinct_scores(mut dets: Vec<Detection>) -> Vec<Detection> {
    let n = dets.len() as f64;
    for (i, d) in dets.iter_mut().enumerate() {
        d.score = (i as f64 + 1.0) / (n + 1.0);
    }
    dets
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn values_are_bounded((gt, dets) in scene()) {
        let e = evaluate(&dets, &gt, &EvalParams::default()).unwrap();
        prop_assert!((0.0..=100.0).contains(&e.map) && (0.0..=100.0).contains(&e.mar));
        let mut strictest = 0.0;
        for c in &e.categories {
            prop_assert!(c.ap.iter().chain(&c.recall).all(|v| (0.0..=1.0).contains(v)));
            let mean_recall = c.recall.iter().sum::<f64>() / c.recall.len() as f64;
            prop_assert!(mean_recall + 1e-12 >= *c.recall.last().unwrap());
            strictest += c.recall.last().unwrap();
        }
        if !e.categories.is_empty() {
            prop_assert!(e.mar + 1e-9 >= 100.0 * strictest / e.categories.len() as f64);
        }
    }

    #[test]
    fn stricter_thresholds_never_raise_ap((gt, dets) in scene()) {
        let e = evaluate(&dets, &gt, &EvalParams::default()).unwrap();
        for c in &e.categories {
            prop_assert!(c.ap.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", c.ap);
        }
    }

    #[test]
    fn lower_scored_duplicate_never_raises_ap((gt, dets) in scene(), pick in any::<prop::sample::Index>(), factor in 0.0..1.0f64) {
        prop_assume!(!dets.is_empty());
        let params = EvalParams::default();
        let before = evaluate(&dets, &gt, &params).unwrap();
        let mut dup = dets[pick.index(dets.len())].clone();
        dup.score *= factor;
        let mut more = dets.clone();
        more.push(dup);
        let after = evaluate(&more, &gt, &params).unwrap();
        for (a, b) in after.categories.iter().zip(&before.categories) {
            for (x, y) in a.ap.iter().zip(&b.ap) {
                prop_assert!(x <= &(y + 1e-12));
            }
            prop_assert_eq!(&a.recall, &b.recall);
        }
    }

    #[test]
    fn input_order_is_irrelevant(
        (gt, shuffled, dets) in scene().prop_flat_map(|(gt, dets)| {
            let dets = distinct_scores(dets);
            (Just(gt), Just(dets.clone()).prop_shuffle(), Just(dets))
        })
    ) {
        let params = EvalParams::default();
        prop_assert_eq!(evaluate(&dets, &gt, &params).unwrap(), evaluate(&shuffled, &gt, &params).unwrap());
    }

    #[test]
    fn ground_truth_as_predictions_scores_perfectly((gt, _) in scene()) {
        prop_assume!(!gt.annotations.is_empty());
        let dets: Vec<Detection> = gt
            .annotations
            .iter()
            .map(|a| Detection::new(a.image_id, a.category_id, 1.0, a.bbox, a.mask.clone()))
            .collect();
        let e = evaluate(&dets, &gt, &EvalParams::default()).unwrap();
        prop_assert_eq!((e.map, e.mar), (100.0, 100.0));
    }
}
