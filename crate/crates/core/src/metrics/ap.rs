use crate::assign::match_leaves;
use crate::geom::box_iou;
use crate::structure::Hierarchy;
use crate::Result;

/// Default IoU threshold for a matched leaf to count as a true positive.
pub const AP_IOU_THRESHOLD: f64 = 0.25;

/// True/false positive and false negative counts of one shape's leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl PartCounts {
    /// `TP / (TP + FP + FN)`; 1 when both sides are empty.
    pub fn ap(&self) -> f64 {
        let d = self.true_pos + self.false_pos + self.false_neg;
        if d == 0 {
            1.0
        } else {
            self.true_pos as f64 / d as f64
        }
    }
}

/// Counts leaves matched by [`match_leaves`] whose IoU reaches `iou_thresh`.
pub fn part_counts(pred: &Hierarchy, gt: &Hierarchy, iou_thresh: f64) -> Result<PartCounts> {
    let a = match_leaves(pred, gt)?;
    let mut tp = 0;
    for &(p, g) in &a.pairs {
        if box_iou(pred.bbox(p)?, gt.bbox(g)?) >= iou_thresh {
            tp += 1;
        }
    }
    Ok(PartCounts {
        true_pos: tp,
        false_pos: pred.leaf_count() - tp,
        false_neg: gt.leaf_count() - tp,
    })
}

/// Per-shape class-agnostic AP. Predictions carry no confidence, so the
/// precision-recall curve collapses to a single operating point and the
/// score is `TP / (TP + FP + FN)`.
pub fn part_ap(pred: &Hierarchy, gt: &Hierarchy, iou_thresh: f64) -> Result<f64> {
    Ok(part_counts(pred, gt, iou_thresh)?.ap())
}
