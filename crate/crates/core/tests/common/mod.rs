#![allow(dead_code)]

use maskfuse_core::{BBox, BinaryMask, Detection};
use proptest::prelude::*;

/// Random mask of the given size; density varies from case to case.
pub fn mask_of(h: usize, w: usize) -> impl Strategy<Value = BinaryMask> {
    (0.0..=1.0f64)
        .prop_flat_map(move |p| prop::collection::vec(prop::bool::weighted(p), h * w))
        .prop_map(move |bits| BinaryMask::from_bools(h, w, &bits).unwrap())
}

pub fn mask(max_h: usize, max_w: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_h, 1..=max_w).prop_flat_map(|(h, w)| mask_of(h, w))
}

pub fn mask_pair(max_h: usize, max_w: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max_h, 1..=max_w).prop_flat_map(|(h, w)| (mask_of(h, w), mask_of(h, w)))
}

/// Integer-aligned box of at least one pixel inside a `dim x dim` image.
pub fn int_box(dim: usize) -> impl Strategy<Value = BBox> {
    (0..dim, 0..dim)
        .prop_flat_map(move |(x, y)| (Just(x), Just(y), 1..=dim - x, 1..=dim - y))
        .prop_map(|(x, y, w, h)| BBox::new(x as f64, y as f64, w as f64, h as f64))
}

/// Scores from a coarse grid so that ties are common.
pub fn tied_score() -> impl Strategy<Value = f64> {
    (1..=10u32).prop_map(|k| f64::from(k) / 10.0)
}

/// Detections whose masks fill their boxes.
pub fn rect_detections(
    max_n: usize,
    dim: usize,
    categories: u64,
) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((1..=categories, tied_score(), int_box(dim)), 0..=max_n).prop_map(
        move |items| {
            items
                .into_iter()
                .map(|(cat, score, b)| {
                    Detection::new(1, cat, score, b, BinaryMask::from_box(dim, dim, &b))
                })
                .collect()
        },
    )
}

/// Detections with free-form masks and boxes that need not match them.
pub fn blob_detections(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(
        (1..=2u64, tied_score(), int_box(dim), mask_of(dim, dim)),
        0..=max_n,
    )
    .prop_map(|items| {
        items
            .into_iter()
            .map(|(cat, score, b, m)| Detection::new(1, cat, score, b, m))
            .collect()
    })
}

/// Pixel-by-pixel IoU.
pub fn naive_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(r, c), b.get(r, c));
            inter += u64::from(x && y);
            union += u64::from(x || y);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
