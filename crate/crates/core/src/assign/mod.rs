//! Minimum-cost bipartite assignment and the node correspondences built on
//! it: leaf matching by box overlap, and label-restricted matching per tree
//! level.

mod hungarian;

pub use hungarian::{hungarian, CostMatrix, LARGE};

use crate::geom::box_iou;
use crate::structure::{Hierarchy, NodeId};
use crate::Result;

/// Partial bijection between prediction ids (rows) and ground-truth ids
/// (columns).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn gt_for(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == pred).map(|p| p.1)
    }

    /// Relabels row and column indices through `rows` and `cols`.
    fn remap(self, rows: &[usize], cols: &[usize]) -> Assignment {
        Assignment {
            pairs: self.pairs.iter().map(|&(r, c)| (rows[r], cols[c])).collect(),
            unmatched_pred: self.unmatched_pred.iter().map(|&r| rows[r]).collect(),
            unmatched_gt: self.unmatched_gt.iter().map(|&c| cols[c]).collect(),
            total_cost: self.total_cost,
        }
    }

    fn extend(&mut self, o: Assignment) {
        self.pairs.extend(o.pairs);
        self.unmatched_pred.extend(o.unmatched_pred);
        self.unmatched_gt.extend(o.unmatched_gt);
        self.total_cost += o.total_cost;
    }

    fn sort(&mut self) {
        self.pairs.sort_unstable();
        self.unmatched_pred.sort_unstable();
        self.unmatched_gt.sort_unstable();
    }
}

/// Cost used when pairing leaves by geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafMatchCost {
    /// `1 - IoU`, with zero-overlap pairs forbidden.
    #[default]
    OneMinusIou,
    /// Squared distance between box centers plus squared difference of
    /// extents. Never forbids a pair.
    CenterExtent,
}

/// Pairs predicted leaves with ground-truth leaves by `1 - IoU`, forbidding
/// pairs that do not overlap.
pub fn match_leaves(pred: &Hierarchy, gt: &Hierarchy) -> Result<Assignment> {
    match_leaves_with(pred, gt, LeafMatchCost::OneMinusIou)
}

pub fn match_leaves_with(pred: &Hierarchy, gt: &Hierarchy, cost: LeafMatchCost) -> Result<Assignment> {
    let pl = pred.leaves();
    let gl = gt.leaves();
    let pb = pl.iter().map(|&i| pred.bbox(i)).collect::<Result<Vec<_>>>()?;
    let gb = gl.iter().map(|&i| gt.bbox(i)).collect::<Result<Vec<_>>>()?;
    let mut m = CostMatrix::filled(pl.len(), gl.len(), LARGE);
    for (i, a) in pb.iter().enumerate() {
        for (j, b) in gb.iter().enumerate() {
            let c = match cost {
                LeafMatchCost::OneMinusIou => {
                    let iou = box_iou(a, b);
                    if iou > 0.0 {
                        1.0 - iou
                    } else {
                        LARGE
                    }
                }
                LeafMatchCost::CenterExtent => {
                    a.translation.dist_sq(b.translation) + (a.scale - b.scale).norm_sq()
                }
            };
            m.set(i, j, c);
        }
    }
    Ok(hungarian(&m)?.remap(&pl, &gl))
}

/// Weight of the center-distance tie-breaker in same-semantics matching.
const PROXIMITY_WEIGHT: f64 = 0.01;

/// Pairs nodes level by level, only ever joining nodes with the same
/// semantic label. The cost is `1 - IoU` plus a small center-distance term
/// so non-overlapping candidates are still ranked by proximity; pairs are
/// never forbidden for lack of overlap.
pub fn match_same_semantics(pred: &Hierarchy, gt: &Hierarchy) -> Result<Assignment> {
    let pl = pred.levels();
    let gl = gt.levels();
    let depth = pl.len().max(gl.len());
    let mut out = Assignment::default();
    for d in 0..depth {
        let empty = Vec::new();
        let rows: &Vec<NodeId> = pl.get(d).unwrap_or(&empty);
        let cols: &Vec<NodeId> = gl.get(d).unwrap_or(&empty);
        let mut m = CostMatrix::filled(rows.len(), cols.len(), LARGE);
        for (i, &a) in rows.iter().enumerate() {
            for (j, &b) in cols.iter().enumerate() {
                if pred.node(a).semantic != gt.node(b).semantic {
                    continue;
                }
                let (ba, bb) = (pred.bbox(a)?, gt.bbox(b)?);
                let c = 1.0 - box_iou(ba, bb) + PROXIMITY_WEIGHT * ba.translation.dist(bb.translation);
                m.set(i, j, c);
            }
        }
        out.extend(hungarian(&m)?.remap(rows, cols));
    }
    out.sort();
    Ok(out)
}
