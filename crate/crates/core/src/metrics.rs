//! Dataset-level aggregation and the binary semantic mean IoU.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::detection::ImageId;
use crate::error::{Error, Result};
use crate::semantic::SemanticMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMetrics {
    /// Percent.
    pub map: f64,
    /// Percent.
    pub mar: f64,
}

/// Per-dataset metrics plus their unweighted averages, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// In the order datasets were given.
    pub per_dataset: Vec<(String, DatasetMetrics)>,
    pub average_map: f64,
    pub average_mar: f64,
    /// `(average_map + average_mar) / 2`
    pub combined: f64,
    pub semantic_miou: Option<Vec<(String, f64)>>,
}

pub fn aggregate_report(
    per_dataset: Vec<(String, DatasetMetrics)>,
    semantic_miou: Option<Vec<(String, f64)>>,
) -> Result<MetricsReport> {
    if per_dataset.is_empty() {
        return Err(Error::Input("no datasets to aggregate".into()));
    }
    let n = per_dataset.len() as f64;
    let average_map = per_dataset.iter().map(|(_, m)| m.map).sum::<f64>() / n;
    let average_mar = per_dataset.iter().map(|(_, m)| m.mar).sum::<f64>() / n;
    Ok(MetricsReport {
        per_dataset,
        average_map,
        average_mar,
        combined: (average_map + average_mar) / 2.0,
        semantic_miou,
    })
}

/// Mean over {defect, background} of the per-class IoU, with pixel counts
/// pooled over all images; in percent. A class absent from both predictions
/// and ground truth everywhere is left out of the mean.
pub fn semantic_mean_iou(pred_maps: &[SemanticMap], gt_maps: &[SemanticMap]) -> Result<f64> {
    let preds: BTreeMap<ImageId, &SemanticMap> =
        pred_maps.iter().map(|m| (m.image_id, m)).collect();
    let gts: BTreeMap<ImageId, &SemanticMap> = gt_maps.iter().map(|m| (m.image_id, m)).collect();
    let unpaired: Vec<ImageId> = preds
        .keys()
        .filter(|id| !gts.contains_key(id))
        .chain(gts.keys().filter(|id| !preds.contains_key(id)))
        .copied()
        .collect();
    if !unpaired.is_empty() {
        return Err(Error::Input(format!(
            "semantic maps without a counterpart for images {unpaired:?}"
        )));
    }

    // [defect, background] x [intersection, union]
    let mut counts = [[0u64; 2]; 2];
    for (id, pred) in &preds {
        let gt = gts[id];
        let (inter, union) = pred.mask.overlap_counts(&gt.mask)?;
        let total = (gt.mask.height() * gt.mask.width()) as u64;
        counts[0][0] += inter;
        counts[0][1] += union;
        // background: complement of the union intersects, complement of the intersection unions
        counts[1][0] += total - union;
        counts[1][1] += total - inter;
    }

    let ious: Vec<f64> = counts
        .iter()
        .filter(|c| c[1] > 0)
        .map(|c| c[0] as f64 / c[1] as f64)
        .collect();
    if ious.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * ious.iter().sum::<f64>() / ious.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use alloc::vec;

    fn rows(values: &[f64]) -> Vec<f64> {
        values.to_vec()
    }

    const HTC_MAP: [f64; 14] = [
        42.7, 54.4, 28.2, 27.7, 59.1, 36.2, 30.2, 44.0, 43.8, 81.5, 93.9, 23.0, 58.3, 38.2,
    ];
    const HTC_MAR: [f64; 14] = [
        56.1, 69.8, 45.2, 44.4, 72.1, 55.9, 54.1, 58.0, 56.9, 86.9, 96.1, 39.0, 69.4, 52.1,
    ];

    #[test]
    fn htc_row_averages() {
        let per: Vec<_> = rows(&HTC_MAP)
            .into_iter()
            .zip(HTC_MAR)
            .enumerate()
            .map(|(i, (map, mar))| (format!("d{i}"), DatasetMetrics { map, mar }))
            .collect();
        let r = aggregate_report(per, None).unwrap();
        assert!((r.average_mar - 61.14).abs() <= 0.01);
        assert!((r.average_map - 47.20).abs() <= 0.05);
        assert!((r.combined - 54.17).abs() <= 0.05);
        assert_eq!(r.combined, (r.average_map + r.average_mar) / 2.0);
    }

    #[test]
    fn combined_of_printed_averages() {
        let r = aggregate_report(
            vec![(
                "x".into(),
                DatasetMetrics {
                    map: 47.20,
                    mar: 61.14,
                },
            )],
            None,
        )
        .unwrap();
        assert!((r.combined - 54.17).abs() < 1e-9);
    }

    #[test]
    fn aggregate_requires_a_dataset() {
        assert!(matches!(
            aggregate_report(vec![], None),
            Err(Error::Input(_))
        ));
    }

    fn map(id: ImageId, mask: BinaryMask) -> SemanticMap {
        SemanticMap { image_id: id, mask }
    }

    #[test]
    fn miou_perfect_and_half() {
        let gt = vec![
            map(1, BinaryMask::from_fn(4, 4, |r, _| r < 2)),
            map(2, BinaryMask::from_fn(2, 6, |_, c| c % 2 == 0)),
        ];
        assert_eq!(semantic_mean_iou(&gt, &gt).unwrap(), 100.0);
        let background: Vec<_> = gt
            .iter()
            .map(|m| map(m.image_id, BinaryMask::new(m.mask.height(), m.mask.width())))
            .collect();
        assert_eq!(semantic_mean_iou(&background, &gt).unwrap(), 25.0);
        // no defects anywhere: only background is scored
        assert_eq!(semantic_mean_iou(&background, &background).unwrap(), 100.0);
    }

    #[test]
    fn miou_pools_pixels_across_images() {
        let gt = vec![
            map(1, BinaryMask::from_pixels(2, 2, [(0, 0)])),
            map(2, BinaryMask::from_pixels(2, 2, [(0, 0), (1, 1)])),
        ];
        let pred = vec![
            map(1, BinaryMask::from_pixels(2, 2, [(0, 0), (0, 1)])),
            map(2, BinaryMask::from_pixels(2, 2, [(0, 0)])),
        ];
        // defect: inter 2, union 4; background: inter 4, union 6
        let expected = 100.0 * (2.0 / 4.0 + 4.0 / 6.0) / 2.0;
        assert!((semantic_mean_iou(&pred, &gt).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn miou_errors() {
        let a = vec![map(1, BinaryMask::new(2, 2))];
        let b = vec![map(2, BinaryMask::new(2, 2))];
        assert!(matches!(semantic_mean_iou(&a, &b), Err(Error::Input(_))));
        let c = vec![map(1, BinaryMask::new(3, 2))];
        assert!(matches!(
            semantic_mean_iou(&a, &c),
            Err(Error::Shape { .. })
        ));
    }
}
