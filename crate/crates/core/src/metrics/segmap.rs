use std::collections::BTreeSet;

use serde::Serialize;

use crate::structure::{LabelId, Segment};
use crate::{Error, Result};

/// Default point-set IoU for a predicted segment to count as a hit.
pub const SEG_IOU_THRESHOLD: f64 = 0.5;

/// A predicted segment with its detection confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSegment {
    pub segment: Segment,
    pub confidence: f64,
}

impl ScoredSegment {
    pub fn new(segment: Segment) -> Self {
        ScoredSegment { segment, confidence: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationMap {
    /// AP of every class present in the ground truth, by label id.
    pub per_class: Vec<(u32, f64)>,
    /// Mean over `per_class`; 1 when the ground truth is empty and nothing
    /// was predicted, 0 when it is empty but predictions exist.
    pub mean: f64,
}

/// `|a ∩ b| / |a ∪ b|` of two sorted index lists.
pub fn segment_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Area under the precision-recall curve with all-points interpolation.
fn average_precision(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut rec = vec![0.0];
    let mut prec = vec![0.0];
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += h as usize;
        rec.push(tp as f64 / n_gt as f64);
        prec.push(tp as f64 / (k + 1) as f64);
    }
    rec.push(1.0);
    prec.push(0.0);
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    (1..rec.len()).map(|i| (rec[i] - rec[i - 1]) * prec[i]).sum()
}

fn check_range(s: &Segment, n_points: usize) -> Result<()> {
    match s.point_indices().last() {
        Some(&m) if m >= n_points => Err(Error::InvalidSegmentation(format!(
            "point index {m} out of range for a cloud of {n_points} points"
        ))),
        _ => Ok(()),
    }
}

/// Instance segmentation mAP of one shape. Per class, predictions are
/// visited by descending confidence (ties by position) and greedily matched
/// to the unmatched ground-truth segment of the same class with the highest
/// IoU; a match at or above `iou_thresh` is a hit.
pub fn segmentation_map(
    pred: &[ScoredSegment],
    gt: &[Segment],
    n_points: usize,
    iou_thresh: f64,
) -> Result<SegmentationMap> {
    pooled_segmentation_map(&[SegmentedShape { pred, gt, n_points }], iou_thresh)
}

/// Predictions and ground truth of one shape.
#[derive(Debug, Clone, Copy)]
pub struct SegmentedShape<'a> {
    pub pred: &'a [ScoredSegment],
    pub gt: &'a [Segment],
    pub n_points: usize,
}

/// Dataset-level mAP: per class, the predictions of all shapes form one
/// ranking (descending confidence, ties by shape then position) and each
/// is matched within its own shape, as in [`segmentation_map`].
pub fn pooled_segmentation_map(shapes: &[SegmentedShape<'_>], iou_thresh: f64) -> Result<SegmentationMap> {
    for s in shapes {
        for p in s.pred {
            check_range(&p.segment, s.n_points)?;
            if !p.confidence.is_finite() {
                return Err(Error::InvalidSegmentation("non-finite confidence".into()));
            }
        }
        for g in s.gt {
            check_range(g, s.n_points)?;
        }
    }
    let classes: BTreeSet<LabelId> = shapes.iter().flat_map(|s| s.gt.iter().map(|g| g.semantic)).collect();
    let mut per_class = Vec::with_capacity(classes.len());
    for c in classes {
        let gts: Vec<Vec<&Segment>> = shapes
            .iter()
            .map(|s| s.gt.iter().filter(|g| g.semantic == c).collect())
            .collect();
        let n_gt: usize = gts.iter().map(Vec::len).sum();
        let mut order: Vec<(usize, usize)> = shapes
            .iter()
            .enumerate()
            .flat_map(|(k, s)| (0..s.pred.len()).filter(move |&i| s.pred[i].segment.semantic == c).map(move |i| (k, i)))
            .collect();
        let conf = |(k, i): (usize, usize)| shapes[k].pred[i].confidence;
        order.sort_by(|&a, &b| conf(b).total_cmp(&conf(a)).then(a.cmp(&b)));
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut hits = Vec::with_capacity(order.len());
        for (k, i) in order {
            let p = &shapes[k].pred[i];
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts[k].iter().enumerate() {
                if used[k][j] {
                    continue;
                }
                let iou = segment_iou(p.segment.point_indices(), g.point_indices());
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= iou_thresh => {
                    used[k][j] = true;
                    hits.push(true);
                }
                _ => hits.push(false),
            }
        }
        per_class.push((c.0, average_precision(&hits, n_gt)));
    }
    let mean = if per_class.is_empty() {
        if shapes.iter().all(|s| s.pred.is_empty()) {
            1.0
        } else {
            0.0
        }
    } else {
        per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64
    };
    Ok(SegmentationMap { per_class, mean })
}
