//! Training objectives and the prediction-to-ground-truth correspondence
//! they are computed over.

use super::tape::focal_with_grad;
use super::{BoxVars, StructureOutputs, Tape, Tensor, Var, RELATION_TYPES};
use crate::geom::{OrientedBox, Vec3};
use crate::structure::{Hierarchy, NodeId};
use crate::{Error, Result};

/// Weight of the box corner term in the total loss.
pub const LAMBDA_BOX: f64 = 20.0;
/// Weight of the axis alignment term in the total loss.
pub const LAMBDA_NORM: f64 = 10.0;
/// Focal loss class weight of positive merges.
pub const FOCAL_ALPHA: f64 = 0.15;
/// Focal loss focusing exponent.
pub const FOCAL_GAMMA: f64 = 2.0;

const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

/// `−α_t (1 − p_t)^γ log p_t` with `p_t` the probability of the true class,
/// the score clamped to `[1e-7, 1 − 1e-7]`.
pub fn focal_loss(score: f64, label: bool, alpha: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidProbability(score));
    }
    Ok(focal_with_grad(score, if label { 1.0 } else { 0.0 }, alpha, gamma).0)
}

/// `8 × 3` corner matrix of a differentiable box.
pub fn box_corners(tape: &mut Tape, b: &BoxVars) -> Var {
    let signs = tape.leaf(Tensor::from_rows(&CORNER_SIGNS.map(|s| s.to_vec())));
    let half = tape.scale(b.extents, 0.5);
    let local = tape.mul_row(signs, half);
    let rt = tape.transpose(b.rotation);
    let world = tape.matmul(local, rt);
    tape.add_row(world, b.center)
}

/// Axis correspondence between a predicted frame (columns of `rotation`)
/// and `gt`: the permutation maximizing the summed `|cos|`, with the sign
/// of each matched cosine. Ties go to the first permutation in
/// lexicographic order.
fn axis_correspondence(rotation: &Tensor, gt: &OrientedBox) -> ([usize; 3], [f64; 3]) {
    let axes = gt.axes();
    let dot = |a: usize, g: usize| {
        (0..3).map(|r| rotation.get(r, a) * axes[g].to_array()[r]).sum::<f64>()
    };
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best = (PERMS[0], f64::NEG_INFINITY);
    for p in PERMS {
        let s: f64 = (0..3).map(|a| dot(a, p[a]).abs()).sum();
        if s > best.1 {
            best = (p, s);
        }
    }
    let perm = best.0;
    let signs = [0, 1, 2].map(|a| if dot(a, perm[a]) < 0.0 { -1.0 } else { 1.0 });
    (perm, signs)
}

/// Mean squared distance between the predicted corners and their
/// corresponding corners of `gt`. Corners correspond through the axis
/// alignment of the two frames: the predicted corner on side `±` of
/// predicted axis `a` pairs with the gt corner on the matching side of the
/// gt axis best aligned with `a`. The pairing is one-to-one, so a box
/// flattened onto one face of `gt` is not a minimum.
pub fn box_loss(tape: &mut Tape, pred: &BoxVars, gt: &OrientedBox) -> Var {
    let corners = box_corners(tape, pred);
    let (perm, signs) = axis_correspondence(tape.value(pred.rotation), gt);
    let h = gt.half_extents().to_array();
    let matched: Vec<Vec<f64>> = CORNER_SIGNS
        .iter()
        .map(|s| {
            let mut local = [0.0; 3];
            for a in 0..3 {
                local[perm[a]] = s[a] * signs[a] * h[perm[a]];
            }
            gt.to_world(Vec3::from_array(local)).to_array().to_vec()
        })
        .collect();
    let target = tape.leaf(Tensor::from_rows(&matched));
    let d = tape.sub(corners, target);
    let sq = tape.mul(d, d);
    let s = tape.sum(sq);
    tape.scale(s, 1.0 / 8.0)
}

/// Axis alignment: for each predicted axis, `1 − |cos|` to the best
/// aligned ground-truth axis, summed over the three axes.
pub fn norm_loss(tape: &mut Tape, pred: &BoxVars, gt: &OrientedBox) -> Var {
    let axes = gt.axes();
    let g = Tensor::from_rows(&[
        vec![axes[0].x, axes[1].x, axes[2].x],
        vec![axes[0].y, axes[1].y, axes[2].y],
        vec![axes[0].z, axes[1].z, axes[2].z],
    ]);
    let gv = tape.leaf(g);
    let rt = tape.transpose(pred.rotation);
    let dots = tape.matmul(rt, gv);
    let a = tape.abs(dots);
    let av = tape.value(a);
    let mut mask = Tensor::zeros(3, 3);
    for r in 0..3 {
        let row = av.row_slice(r);
        let best = (0..3).fold(0, |m, c| if row[c] > row[m] { c } else { m });
        mask.set(r, best, 1.0);
    }
    let mv = tape.leaf(mask);
    let picked = tape.mul(a, mv);
    let s = tape.sum(picked);
    let neg = tape.scale(s, -1.0);
    tape.add_scalar(neg, 3.0)
}

/// Mean binary cross-entropy of relation probabilities against 0/1 labels.
pub fn edge_loss(tape: &mut Tape, probs: Var, labels: &[f64]) -> Var {
    tape.bce(probs, labels)
}

/// Sum of focal losses of merge scores against 0/1 labels.
pub fn merge_loss(tape: &mut Tape, scores: Var, labels: &[f64]) -> Var {
    tape.focal(scores, labels, FOCAL_ALPHA, FOCAL_GAMMA)
}

/// `λ_box L_box + λ_norm L_norm + L_edge`.
pub fn total_loss(tape: &mut Tape, l_box: Var, l_norm: Var, l_edge: Var) -> Var {
    let b = tape.scale(l_box, LAMBDA_BOX);
    let n = tape.scale(l_norm, LAMBDA_NORM);
    let s = tape.add(b, n);
    tape.add(s, l_edge)
}

/// Ground-truth node for each predicted node: a leaf maps to the ground
/// truth leaf holding most of its points, an internal node to the
/// same-label ground-truth node with the highest point IoU. Both
/// hierarchies index the same cloud.
pub fn node_correspondence(pred: &Hierarchy, gt: &Hierarchy) -> Vec<Option<NodeId>> {
    let max_point = gt.node(gt.root()).point_indices.last().copied().unwrap_or(0);
    let mut gt_leaf_of = vec![usize::MAX; max_point + 1];
    for l in gt.leaves() {
        for &i in &gt.node(l).point_indices {
            gt_leaf_of[i] = l;
        }
    }
    pred.nodes()
        .iter()
        .map(|n| {
            if n.is_leaf() {
                let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
                for &i in &n.point_indices {
                    if let Some(&g) = gt_leaf_of.get(i) {
                        if g != usize::MAX {
                            *counts.entry(g).or_default() += 1;
                        }
                    }
                }
                counts
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(g, _)| g)
            } else {
                let mut best: Option<(f64, NodeId)> = None;
                for g in gt.nodes().iter().filter(|g| !g.is_leaf() && g.semantic == n.semantic) {
                    let iou = sorted_iou(&n.point_indices, &g.point_indices);
                    if iou > 0.0 && best.is_none_or(|(b, _)| iou > b) {
                        best = Some((iou, g.id));
                    }
                }
                best.map(|(_, g)| g)
            }
        })
        .collect()
}

fn sorted_iou(a: &[usize], b: &[usize]) -> f64 {
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

/// Loss values of one structure forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub boxes: f64,
    pub norm: f64,
    pub edge: f64,
    pub total: f64,
}

/// Structure loss of one shape. Box and axis terms are averaged over the
/// predicted nodes with a ground-truth counterpart; the edge term is the
/// mean cross-entropy over every sibling pair and relation type, labels
/// taken from the counterparts (no relation when they coincide or one is
/// missing).
pub fn structure_loss(
    tape: &mut Tape,
    out: &StructureOutputs,
    pred: &Hierarchy,
    gt: &Hierarchy,
) -> Result<(Var, LossTerms)> {
    let corr = node_correspondence(pred, gt);
    let mut box_terms = Vec::new();
    let mut norm_terms = Vec::new();
    for (id, c) in corr.iter().enumerate() {
        let Some(g) = c else { continue };
        let gb = gt.bbox(*g)?;
        box_terms.push(box_loss(tape, &out.boxes[id], gb));
        norm_terms.push(norm_loss(tape, &out.boxes[id], gb));
    }
    let mean_of = |tape: &mut Tape, terms: &[Var]| -> Var {
        if terms.is_empty() {
            return tape.leaf(Tensor::scalar(0.0));
        }
        let cat = tape.concat_rows(terms);
        tape.mean(cat)
    };
    let l_box = mean_of(tape, &box_terms);
    let l_norm = mean_of(tape, &norm_terms);

    let mut prob_rows = Vec::new();
    let mut labels = Vec::new();
    for s in &out.subsets {
        let Some(p) = s.probs else { continue };
        prob_rows.push(p);
        for &(i, j) in &s.pairs {
            let (a, b) = (corr[s.children[i]], corr[s.children[j]]);
            let set = match (a, b) {
                (Some(a), Some(b)) if a != b => gt.relation_between(a, b),
                _ => Default::default(),
            };
            labels.extend(set.indicators());
        }
    }
    let l_edge = if prob_rows.is_empty() {
        tape.leaf(Tensor::scalar(0.0))
    } else {
        let all = tape.concat_rows(&prob_rows);
        debug_assert_eq!(tape.value(all).len(), labels.len());
        debug_assert_eq!(tape.value(all).cols(), RELATION_TYPES);
        edge_loss(tape, all, &labels)
    };
    let total = total_loss(tape, l_box, l_norm, l_edge);
    let terms = LossTerms {
        boxes: tape.scalar(l_box),
        norm: tape.scalar(l_norm),
        edge: tape.scalar(l_edge),
        total: tape.scalar(total),
    };
    Ok((total, terms))
}
