use std::collections::HashMap;

use crate::assign::match_same_semantics;
use crate::structure::Hierarchy;
use crate::Result;

/// Relation-instance counts of one shape. An instance is a (sibling pair,
/// relation type) combination, so a pair carrying two types counts twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeCounts {
    pub true_pos: usize,
    pub pred_total: usize,
    pub gt_total: usize,
}

impl EdgeCounts {
    pub fn precision(&self) -> f64 {
        if self.pred_total == 0 {
            0.0
        } else {
            self.true_pos as f64 / self.pred_total as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gt_total == 0 {
            0.0
        } else {
            self.true_pos as f64 / self.gt_total as f64
        }
    }

    /// `1 - F1`. Both sides empty scores 0; otherwise a zero F1 (including
    /// nothing predicted) scores 1.
    pub fn error(&self) -> f64 {
        if self.pred_total == 0 && self.gt_total == 0 {
            return 0.0;
        }
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            1.0
        } else {
            1.0 - 2.0 * (r * p) / (r + p)
        }
    }
}

/// Counts predicted relation instances whose endpoints both map, under the
/// same-semantics correspondence, to a ground-truth pair carrying the same
/// type.
pub fn edge_counts(pred: &Hierarchy, gt: &Hierarchy) -> Result<EdgeCounts> {
    let m = match_same_semantics(pred, gt)?;
    let map: HashMap<usize, usize> = m.pairs.iter().copied().collect();
    let mut c = EdgeCounts {
        pred_total: pred.relations().iter().map(|r| r.types.len()).sum(),
        gt_total: gt.relations().iter().map(|r| r.types.len()).sum(),
        true_pos: 0,
    };
    for r in pred.relations() {
        if let (Some(&ga), Some(&gb)) = (map.get(&r.a), map.get(&r.b)) {
            c.true_pos += r.types.intersection(gt.relation_between(ga, gb)).len();
        }
    }
    // a predicted pair listed twice must not inflate the hit count
    c.true_pos = c.true_pos.min(c.pred_total).min(c.gt_total);
    Ok(c)
}

/// Edge prediction error `1 - F1` of one shape.
pub fn edge_error(pred: &Hierarchy, gt: &Hierarchy) -> Result<f64> {
    Ok(edge_counts(pred, gt)?.error())
}
