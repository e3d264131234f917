use serde::{Deserialize, Serialize};

use crate::geom::box_iou;
use crate::structure::{Hierarchy, NodeId};
use crate::Result;

/// Box IoU a pair of leaves must exceed to become a merge candidate.
pub const CONFLICT_IOU_THRESHOLD: f64 = 0.09;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub source: NodeId,
    pub target: NodeId,
    pub conflict_score: f64,
}

/// Directional merge candidates, at most one per source, sorted by source.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateMatrix {
    entries: Vec<CandidateEntry>,
}

impl CandidateMatrix {
    /// Selects, for every source `i` in `ids`, the target `j != i` with the
    /// largest `score(i, j)` strictly above `threshold`; equal scores go to
    /// the lower target id.
    pub fn from_scores(ids: &[NodeId], threshold: f64, mut score: impl FnMut(NodeId, NodeId) -> f64) -> Self {
        let mut entries = Vec::new();
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        for &i in &sorted {
            let mut best: Option<(NodeId, f64)> = None;
            for &j in &sorted {
                if i == j {
                    continue;
                }
                let s = score(i, j);
                if s > threshold && best.is_none_or(|(_, b)| s > b) {
                    best = Some((j, s));
                }
            }
            if let Some((j, s)) = best {
                entries.push(CandidateEntry {
                    source: i,
                    target: j,
                    conflict_score: s,
                });
            }
        }
        CandidateMatrix { entries }
    }

    pub fn entries(&self) -> &[CandidateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn target_of(&self, source: NodeId) -> Option<NodeId> {
        self.entries.iter().find(|e| e.source == source).map(|e| e.target)
    }

    /// Dense `n × n` 0/1 form: row `source` has a single 1 at `target`.
    pub fn to_dense(&self, n: usize) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; n]; n];
        for e in &self.entries {
            if e.source < n && e.target < n {
                m[e.source][e.target] = 1;
            }
        }
        m
    }
}

/// Scores every ordered pair of distinct leaves by box IoU and keeps, per
/// source, the best target above `iou_threshold`.
pub fn detect_conflicts(h: &Hierarchy, iou_threshold: f64) -> Result<CandidateMatrix> {
    let leaves = h.leaves();
    let n = h.len();
    let mut boxes = vec![None; n];
    for &l in &leaves {
        boxes[l] = Some(*h.bbox(l)?);
    }
    // IoU is symmetric; compute each unordered pair once
    let mut cache = std::collections::HashMap::new();
    Ok(CandidateMatrix::from_scores(&leaves, iou_threshold, |i, j| {
        let key = (i.min(j), i.max(j));
        *cache
            .entry(key)
            .or_insert_with(|| box_iou(boxes[i].as_ref().unwrap(), boxes[j].as_ref().unwrap()))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{OrientedBox, UnitQuaternion, Vec3};
    use crate::structure::LabelId;
    use proptest::prelude::*;

    fn aabb(c: Vec3, e: Vec3) -> OrientedBox {
        OrientedBox::axis_aligned(c, e).unwrap()
    }

    fn flat(boxes: &[OrientedBox]) -> Hierarchy {
        let l: Vec<_> = boxes.iter().map(|b| (LabelId(1), *b)).collect();
        Hierarchy::flat(LabelId(0), &l).unwrap()
    }

    #[test]
    fn disjoint_leaves_have_no_candidates() {
        let h = flat(&[aabb(Vec3::ZERO, Vec3::ONE), aabb(Vec3::X * 3.0, Vec3::ONE)]);
        assert!(detect_conflicts(&h, CONFLICT_IOU_THRESHOLD).unwrap().is_empty());
    }

    #[test]
    fn overlap_lists_both_directions() {
        // a 0.1-thick slab inside a unit cube: IoU 0.1 either way
        let h = flat(&[aabb(Vec3::ZERO, Vec3::ONE), aabb(Vec3::ZERO, Vec3::new(0.1, 1.0, 1.0))]);
        let c = detect_conflicts(&h, CONFLICT_IOU_THRESHOLD).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.target_of(0), Some(1));
        assert_eq!(c.target_of(1), Some(0));
        assert!((c.entries()[0].conflict_score - 0.1).abs() < 1e-12);
        assert_eq!(c.to_dense(2), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn largest_score_wins() {
        let s = [[0.0, 0.0, 0.2], [0.0, 0.0, 0.3], [0.2, 0.3, 0.0]];
        let c = CandidateMatrix::from_scores(&[0, 1, 2], CONFLICT_IOU_THRESHOLD, |i, j| s[i][j]);
        assert_eq!(
            c.entries()[2],
            CandidateEntry { source: 2, target: 1, conflict_score: 0.3 }
        );
        assert_eq!(c.target_of(0), Some(2));
    }

    #[test]
    fn ties_go_to_lower_target() {
        let c = CandidateMatrix::from_scores(&[0, 1, 2], 0.0, |i, _| if i == 2 { 0.5 } else { 0.0 });
        assert_eq!(c.entries(), &[CandidateEntry { source: 2, target: 0, conflict_score: 0.5 }]);
    }

    #[test]
    fn threshold_is_strict() {
        let t = CONFLICT_IOU_THRESHOLD;
        let at = CandidateMatrix::from_scores(&[0, 1], t, |_, _| t);
        let above = CandidateMatrix::from_scores(&[0, 1], t, |_, _| t.next_up());
        assert!(at.is_empty());
        assert_eq!(above.len(), 2);
    }

    #[test]
    fn rotated_overlap_detected() {
        let q = UnitQuaternion::from_axis_angle(Vec3::Y, 0.3);
        let a = OrientedBox::new(Vec3::ZERO, Vec3::ONE, q).unwrap();
        let b = OrientedBox::new(Vec3::X * 0.4, Vec3::ONE, q).unwrap();
        let c = detect_conflicts(&flat(&[a, b]), CONFLICT_IOU_THRESHOLD).unwrap();
        assert_eq!(c.len(), 2);
    }

    proptest! {
        #[test]
        fn extreme_thresholds(xs in proptest::collection::vec((-1.0f64..1.0, 0.2f64..1.0), 2..7)) {
            let boxes: Vec<_> = xs.iter().map(|(x, e)| aabb(Vec3::new(*x, 0.0, 0.0), Vec3::new(*e, 1.0, 1.0))).collect();
            let h = flat(&boxes);
            prop_assert!(detect_conflicts(&h, 1.0).unwrap().is_empty());
            let c = detect_conflicts(&h, 0.0).unwrap();
            for i in 0..boxes.len() {
                let overlaps = (0..boxes.len()).any(|j| j != i && box_iou(&boxes[i], &boxes[j]) > 0.0);
                prop_assert_eq!(c.target_of(i).is_some(), overlaps);
                prop_assert!(c.target_of(i) != Some(i));
            }
            for w in c.entries().windows(2) {
                prop_assert!(w[0].source < w[1].source);
            }
        }
    }
}
