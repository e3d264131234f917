//! Structure and merge networks.
//!
//! Every layer works on row batches: a node set is an `n × d` matrix and a
//! single feature is a `1 × d` row.

use super::{Bound, Tape, Tensor, Var, RELATION_TYPES};
use crate::geom::{OrientedBox, UnitQuaternion, Vec3, EXTENT_FLOOR};
use crate::structure::{Hierarchy, NodeId, RelationSet, RelationType, FEATURE_DIM};
use crate::{Error, Result};

/// Points per segment fed to the point encoders.
pub const ENCODER_POINTS: usize = 64;
/// A sibling pair is an edge when any relation probability exceeds this.
pub const EDGE_THRESHOLD: f64 = 0.5;
/// Message-passing rounds per sibling group.
pub const MESSAGE_ITERATIONS: usize = 2;
/// Center offset bound per box axis, as a fraction of the robust range.
pub const OFFSET_RANGE: f64 = 0.25;
/// Quantile trimmed from each end when measuring box extents.
pub const EXTENT_QUANTILE: f64 = 0.02;

/// Up to `cap` of `indices`, evenly strided, in order.
pub fn subsample(indices: &[usize], cap: usize) -> Vec<usize> {
    if indices.len() <= cap {
        return indices.to_vec();
    }
    (0..cap).map(|i| indices[i * indices.len() / cap]).collect()
}

/// `k × 3` matrix of the selected points.
pub fn points_tensor(points: &[Vec3], indices: &[usize]) -> Tensor {
    let data = indices.iter().flat_map(|&i| points[i].to_array()).collect();
    Tensor::new(vec![indices.len(), 3], data)
}

fn check_points(t: &Tensor) -> Result<()> {
    if t.rows() == 0 {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

/// Per-point 3→64→128 ReLU perceptron, max-pooled per set, then a linear
/// 128→128. One output row per set.
pub fn encode_parts(tape: &mut Tape, p: &Bound, sets: &[Tensor]) -> Result<Var> {
    for s in sets {
        check_points(s)?;
    }
    let seg: Vec<usize> = sets.iter().enumerate().flat_map(|(i, s)| std::iter::repeat_n(i, s.rows())).collect();
    let rows: Vec<Var> = sets.iter().map(|s| tape.leaf(s.clone())).collect();
    let all = tape.concat_rows(&rows);
    let h = p.dense_relu(tape, "part.l1", all);
    let h = p.dense_relu(tape, "part.l2", h);
    let pooled = tape.segment_max(h, &seg, sets.len());
    Ok(p.linear(tape, "part.out", pooled))
}

/// Feature of one point set (`k × 3`, `k ≥ 1`).
pub fn encode_part(tape: &mut Tape, p: &Bound, points: &Tensor) -> Result<Var> {
    encode_parts(tape, p, std::slice::from_ref(points))
}

/// Elementwise max over the child rows, then a linear 128→128.
pub fn aggregate_children(tape: &mut Tape, p: &Bound, children: Var) -> Var {
    let m = tape.max_rows(children);
    p.linear(tape, "child.lin", m)
}

/// `linear([x_c; x_parent])` for every row of `children`.
pub fn inject_parent_context(tape: &mut Tape, p: &Bound, children: Var, parent: Var) -> Var {
    let n = tape.value(children).rows();
    let rep = tape.gather_rows(parent, &vec![0; n]);
    let cat = tape.concat_cols(&[children, rep]);
    p.linear(tape, "ctx.lin", cat)
}

/// Edge features and relation probabilities of sibling pairs.
#[derive(Debug, Clone, Copy)]
pub struct PairOutputs {
    /// `P × 256` edge features.
    pub features: Var,
    /// `P × 4` relation probabilities, columns in [`RelationType::ALL`] order.
    pub probs: Var,
}

/// Edge feature `y_ij` (two-layer ReLU perceptron on `[x_i; x_j]`) and the
/// sigmoid relation probabilities of each pair of rows of `x`.
pub fn classify_relations(tape: &mut Tape, p: &Bound, x: Var, pairs: &[(usize, usize)]) -> PairOutputs {
    let (a, b): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let xi = tape.gather_rows(x, &a);
    let xj = tape.gather_rows(x, &b);
    let cat = tape.concat_cols(&[xi, xj]);
    let h = p.dense_relu(tape, "edge.l1", cat);
    let y = p.dense_relu(tape, "edge.l2", h);
    let logits = p.linear(tape, "edge.tau", y);
    let probs = tape.sigmoid(logits);
    PairOutputs { features: y, probs }
}

/// Indices of pairs with any probability above [`EDGE_THRESHOLD`].
pub fn kept_edges(probs: &Tensor) -> Vec<usize> {
    (0..probs.rows())
        .filter(|&r| probs.row_slice(r).iter().any(|&v| v > EDGE_THRESHOLD))
        .collect()
}

/// Relation sets read off a probability matrix.
pub fn relation_sets(probs: &Tensor) -> Vec<RelationSet> {
    (0..probs.rows())
        .map(|r| {
            RelationSet::from_types(
                RelationType::ALL
                    .iter()
                    .zip(probs.row_slice(r))
                    .filter(|(_, &v)| v > EDGE_THRESHOLD)
                    .map(|(t, _)| *t),
            )
        })
        .collect()
}

/// Two rounds of max-aggregated message passing over the kept edges
/// (`pairs[k]` for `k` in `kept`, used in both directions with the shared
/// edge feature row `k` of `y`), followed by a linear on the concatenated
/// round outputs.
pub fn message_pass(tape: &mut Tape, p: &Bound, x: Var, pairs: &[(usize, usize)], y: Option<Var>, kept: &[usize]) -> Var {
    let n = tape.value(x).rows();
    let mut recv = Vec::with_capacity(2 * kept.len());
    let mut send = Vec::with_capacity(2 * kept.len());
    let mut erow = Vec::with_capacity(2 * kept.len());
    for &k in kept {
        let (a, b) = pairs[k];
        recv.extend([a, b]);
        send.extend([b, a]);
        erow.extend([k, k]);
    }
    let ye = match y {
        Some(y) if !kept.is_empty() => Some(tape.gather_rows(y, &erow)),
        _ => None,
    };
    let mut cur = x;
    let mut rounds = Vec::with_capacity(MESSAGE_ITERATIONS);
    for t in 1..=MESSAGE_ITERATIONS {
        let m = match ye {
            Some(ye) => {
                let xi = tape.gather_rows(cur, &recv);
                let xj = tape.gather_rows(cur, &send);
                let cat = tape.concat_cols(&[xi, xj, ye]);
                let msg = p.linear(tape, &format!("mp.msg{t}"), cat);
                tape.segment_max(msg, &recv, n)
            }
            None => tape.leaf(Tensor::zeros(n, FEATURE_DIM)),
        };
        let cat = tape.concat_cols(&[cur, m]);
        cur = p.dense_relu(tape, &format!("mp.upd{t}"), cat);
        rounds.push(cur);
    }
    let cat = tape.concat_cols(&rounds);
    p.linear(tape, "mp.out", cat)
}

/// Differentiable box of one node.
#[derive(Debug, Clone, Copy)]
pub struct BoxVars {
    /// `1 × 3` center.
    pub center: Var,
    /// `1 × 3` full extents.
    pub extents: Var,
    /// `3 × 3` rotation, columns are the box axes.
    pub rotation: Var,
    /// `1 × 4` raw quaternion head output.
    pub quat: Var,
}

impl BoxVars {
    /// Current value as an [`OrientedBox`].
    pub fn to_box(&self, tape: &Tape) -> Result<OrientedBox> {
        let c = tape.value(self.center).data();
        let s = tape.value(self.extents).data();
        let q = tape.value(self.quat).data();
        let rot = UnitQuaternion::new(q[0], q[1], q[2], q[3]).unwrap_or(UnitQuaternion::IDENTITY);
        OrientedBox::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(s[0], s[1], s[2]), rot)
    }
}

/// Box of a node from its feature `x` (`1 × 128`) and its points.
///
/// The rotation is the normalized quaternion head. Extents are the robust
/// ranges of the points along the predicted axes times a softplus head;
/// the center is the mid-range point along those axes plus a tanh-bounded
/// offset of at most [`OFFSET_RANGE`] × the range along each axis, so thin
/// parts can never be pushed off their points.
pub fn decode_box(tape: &mut Tape, p: &Bound, x: Var, points: &[Vec3]) -> Result<BoxVars> {
    let c = crate::geom::centroid(points)?;
    let centered: Vec<[f64; 3]> = points.iter().map(|&q| (q - c).to_array()).collect();
    let quat = p.linear(tape, "box.rot", x);
    let rotation = tape.quat_to_mat(quat);
    let quant = tape.projected_quantiles(&centered, rotation, EXTENT_QUANTILE);
    let lo = tape.gather_rows(quant, &[0]);
    let hi = tape.gather_rows(quant, &[1]);
    let range = tape.sub(hi, lo);
    let shifted = tape.add_scalar(range, -EXTENT_FLOOR);
    let clipped = tape.relu(shifted);
    let range = tape.add_scalar(clipped, EXTENT_FLOOR);
    let scale_raw = p.linear(tape, "box.scale", x);
    let scale = tape.softplus(scale_raw);
    let extents = tape.mul(scale, range);
    let sum = tape.add(lo, hi);
    let mid_local = tape.scale(sum, 0.5);
    let off_raw = p.linear(tape, "box.offset", x);
    let off = tape.tanh(off_raw);
    let off = tape.mul(off, range);
    let off = tape.scale(off, OFFSET_RANGE);
    let local = tape.add(mid_local, off);
    let rt = tape.transpose(rotation);
    let mid = tape.matmul(local, rt);
    let base = tape.leaf(Tensor::row(&c.to_array()));
    let center = tape.add(base, mid);
    Ok(BoxVars {
        center,
        extents,
        rotation,
        quat,
    })
}

/// Relations predicted within one sibling group.
#[derive(Debug, Clone)]
pub struct SubsetOutputs {
    pub parent: NodeId,
    pub children: Vec<NodeId>,
    /// Pairs of positions in `children`, `i < j`.
    pub pairs: Vec<(usize, usize)>,
    pub probs: Option<Var>,
    pub kept: Vec<usize>,
}

/// Result of running the structure network on one hierarchy.
#[derive(Debug, Clone)]
pub struct StructureOutputs {
    /// Final (message-passed) feature per node, `1 × 128`.
    pub features: Vec<Var>,
    /// Bottom-up root feature.
    pub root_feature: Var,
    pub boxes: Vec<BoxVars>,
    pub subsets: Vec<SubsetOutputs>,
}

impl StructureOutputs {
    /// Writes predicted boxes, features and relations into `h`.
    pub fn write_into(&self, tape: &Tape, h: &mut Hierarchy) -> Result<()> {
        for (id, b) in self.boxes.iter().enumerate() {
            let node = h.node_mut(id);
            node.bbox = Some(b.to_box(tape)?);
            node.feature = Some(tape.value(self.features[id]).data().to_vec());
        }
        let mut relations = Vec::new();
        for s in &self.subsets {
            let Some(probs) = s.probs else { continue };
            for (k, set) in relation_sets(tape.value(probs)).into_iter().enumerate() {
                let (i, j) = s.pairs[k];
                relations.push(crate::structure::Relation {
                    a: s.children[i],
                    b: s.children[j],
                    types: set,
                });
            }
        }
        h.set_relations(relations)
    }
}

/// Structure network forward pass over `h` (leaf regions and tree given):
/// leaf encoding, bottom-up aggregation, then top-down per sibling group
/// context injection, relation classification and message passing, and a
/// box for every node.
pub fn structure_forward(tape: &mut Tape, p: &Bound, points: &[Vec3], h: &Hierarchy) -> Result<StructureOutputs> {
    let n = h.len();
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let leaves = h.leaves();
    let sets: Vec<Tensor> = leaves
        .iter()
        .map(|&l| points_tensor(points, &subsample(&h.node(l).point_indices, ENCODER_POINTS)))
        .collect();
    let enc = encode_parts(tape, p, &sets)?;
    let mut bottom: Vec<Option<Var>> = vec![None; n];
    for (k, &l) in leaves.iter().enumerate() {
        bottom[l] = Some(tape.gather_rows(enc, &[k]));
    }
    for id in h.postorder() {
        if h.node(id).is_leaf() {
            continue;
        }
        let rows: Vec<Var> = h.children(id).iter().map(|&c| bottom[c].expect("postorder")).collect();
        let cat = tape.concat_rows(&rows);
        bottom[id] = Some(aggregate_children(tape, p, cat));
    }
    let root = h.root();
    let root_feature = bottom[root].expect("root encoded");

    let mut features: Vec<Option<Var>> = vec![None; n];
    features[root] = Some(message_pass(tape, p, root_feature, &[], None, &[]));
    let mut subsets = Vec::new();
    for parent in h.subsets() {
        let children = h.children(parent).to_vec();
        let rows: Vec<Var> = children.iter().map(|&c| bottom[c].expect("encoded")).collect();
        let xc = tape.concat_rows(&rows);
        let parent_feat = features[parent].expect("preorder");
        let x = inject_parent_context(tape, p, xc, parent_feat);
        let m = children.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let (out, probs, kept) = if pairs.is_empty() {
            (message_pass(tape, p, x, &pairs, None, &[]), None, Vec::new())
        } else {
            let po = classify_relations(tape, p, x, &pairs);
            let kept = kept_edges(tape.value(po.probs));
            (message_pass(tape, p, x, &pairs, Some(po.features), &kept), Some(po.probs), kept)
        };
        for (k, &c) in children.iter().enumerate() {
            features[c] = Some(tape.gather_rows(out, &[k]));
        }
        subsets.push(SubsetOutputs {
            parent,
            children,
            pairs,
            probs,
            kept,
        });
    }
    let features: Vec<Var> = features.into_iter().map(|f| f.expect("every node visited")).collect();
    let mut boxes = Vec::with_capacity(n);
    for id in 0..n {
        let pts: Vec<Vec3> = h.node(id).point_indices.iter().map(|&i| points[i]).collect();
        boxes.push(decode_box(tape, p, features[id], &pts)?);
    }
    Ok(StructureOutputs {
        features,
        root_feature,
        boxes,
        subsets,
    })
}

/// `k × (4 + labels)` rows: each point followed by the one-hot label and
/// the segment's share of the shape's points. The encoder sees a fixed-size
/// subsample, so the share is its only cue to segment size.
pub fn candidate_input(points: &Tensor, label: usize, labels: usize, share: f64) -> Tensor {
    let mut data = Vec::with_capacity(points.rows() * (4 + labels));
    for r in 0..points.rows() {
        data.extend_from_slice(points.row_slice(r));
        data.extend((0..labels).map(|l| if l == label { 1.0 } else { 0.0 }));
        data.push(share);
    }
    Tensor::new(vec![points.rows(), 4 + labels], data)
}

/// Candidate features `c_i`: per-point ReLU perceptron on
/// [`candidate_input`] rows, max-pooled per set to 256.
pub fn encode_candidates(tape: &mut Tape, p: &Bound, sets: &[Tensor]) -> Result<Var> {
    for s in sets {
        check_points(s)?;
    }
    let seg: Vec<usize> = sets.iter().enumerate().flat_map(|(i, s)| std::iter::repeat_n(i, s.rows())).collect();
    let rows: Vec<Var> = sets.iter().map(|s| tape.leaf(s.clone())).collect();
    let all = tape.concat_rows(&rows);
    let h = p.dense_relu(tape, "cand.l1", all);
    let h = p.dense_relu(tape, "cand.l2", h);
    Ok(tape.segment_max(h, &seg, sets.len()))
}

/// `c̃_i = relu(f_n([c_i; x_i]))`, row-wise.
pub fn fuse_node_feature(tape: &mut Tape, p: &Bound, c: Var, x: Var) -> Var {
    let cat = tape.concat_cols(&[c, x]);
    p.dense_relu(tape, "fuse_n", cat)
}

/// `m_ij = relu(f_m([c̃_i; c̃_j]))`; order matters.
pub fn build_merge_feature(tape: &mut Tape, p: &Bound, ci: Var, cj: Var) -> Var {
    let cat = tape.concat_cols(&[ci, cj]);
    p.dense_relu(tape, "merge_m", cat)
}

/// `m̃_ij = relu(f_s([m_ij; x_root]))`, the root row broadcast over pairs.
pub fn fuse_structure_code(tape: &mut Tape, p: &Bound, m: Var, root: Var) -> Var {
    let n = tape.value(m).rows();
    let rep = tape.gather_rows(root, &vec![0; n]);
    let cat = tape.concat_cols(&[m, rep]);
    p.dense_relu(tape, "struct_s", cat)
}

/// Merge probability per row: sigmoid of a two-layer head.
pub fn predict_merge(tape: &mut Tape, p: &Bound, m: Var) -> Var {
    let h = p.dense_relu(tape, "gm.l1", m);
    let logit = p.linear(tape, "gm.l2", h);
    tape.sigmoid(logit)
}

/// Inputs of the merge network for one shape.
#[derive(Debug, Clone)]
pub struct MergeInputs<'a> {
    pub points: &'a [Vec3],
    /// Point indices of each leaf segment.
    pub segments: Vec<&'a [usize]>,
    /// Label index of each leaf segment.
    pub labels: Vec<usize>,
    /// Structure-network feature of each leaf segment (128 values).
    pub features: Vec<Vec<f64>>,
    /// Structure-network root feature.
    pub root: Vec<f64>,
}

/// Merge scores of the ordered `(source, target)` pairs, `P × 1`.
pub fn merge_forward(tape: &mut Tape, p: &Bound, labels: usize, input: &MergeInputs<'_>, pairs: &[(usize, usize)]) -> Result<Var> {
    let mut used: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    used.sort_unstable();
    used.dedup();
    let slot = |seg: usize| used.binary_search(&seg).expect("used segment");
    let sets: Vec<Tensor> = used
        .iter()
        .map(|&s| {
            let idx = subsample(input.segments[s], ENCODER_POINTS);
            let share = input.segments[s].len() as f64 / input.points.len() as f64;
            candidate_input(&points_tensor(input.points, &idx), input.labels[s], labels, share)
        })
        .collect();
    let c = encode_candidates(tape, p, &sets)?;
    let xs = Tensor::new(
        vec![used.len(), FEATURE_DIM],
        used.iter().flat_map(|&s| input.features[s].iter().copied()).collect(),
    );
    let x = tape.leaf(xs);
    let ct = fuse_node_feature(tape, p, c, x);
    let src: Vec<usize> = pairs.iter().map(|&(a, _)| slot(a)).collect();
    let dst: Vec<usize> = pairs.iter().map(|&(_, b)| slot(b)).collect();
    let ci = tape.gather_rows(ct, &src);
    let cj = tape.gather_rows(ct, &dst);
    let m = build_merge_feature(tape, p, ci, cj);
    let root = tape.leaf(Tensor::row(&input.root));
    let mt = fuse_structure_code(tape, p, m, root);
    Ok(predict_merge(tape, p, mt))
}

/// Relation-type probabilities as a fixed-size array.
pub fn probs_row(probs: &Tensor, r: usize) -> [f64; RELATION_TYPES] {
    let mut out = [0.0; RELATION_TYPES];
    out.copy_from_slice(probs.row_slice(r));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{ModelParams, WIDE_DIM};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rows: usize, cols: usize, seed: u64) -> Tensor {
        Tensor::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn permutation(n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        p
    }

    fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
        let data = perm.iter().flat_map(|&i| t.row_slice(i).to_vec()).collect();
        Tensor::new(vec![perm.len(), t.cols()], data)
    }

    fn eval(params: &ModelParams, f: impl FnOnce(&mut Tape, &Bound) -> Var) -> Tensor {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let v = f(&mut tape, &b);
        tape.value(v).clone()
    }

    #[test]
    fn encode_part_shape_and_errors() {
        let p = ModelParams::structure(1);
        let out = eval(&p, |t, b| encode_part(t, b, &rand_t(9, 3, 2)).unwrap());
        assert_eq!(out.shape(), &[1, FEATURE_DIM]);
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        assert!(matches!(
            encode_part(&mut tape, &b, &Tensor::zeros(0, 3)),
            Err(Error::EmptyPointSet)
        ));
    }

    #[test]
    fn encode_part_ignores_duplicates() {
        let p = ModelParams::structure(1);
        let x = rand_t(7, 3, 5);
        let doubled = permute_rows(&x, &[0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4, 5, 6]);
        let a = eval(&p, |t, b| encode_part(t, b, &x).unwrap());
        let d = eval(&p, |t, b| encode_part(t, b, &doubled).unwrap());
        assert_eq!(a, d);
    }

    #[test]
    fn batched_encoding_matches_single() {
        let p = ModelParams::structure(4);
        let (x, y) = (rand_t(5, 3, 1), rand_t(8, 3, 2));
        let both = eval(&p, |t, b| encode_parts(t, b, &[x.clone(), y.clone()]).unwrap());
        let single = eval(&p, |t, b| encode_part(t, b, &y).unwrap());
        assert_eq!(both.row_slice(1), single.data());
    }

    #[test]
    fn aggregate_with_identity_linear_is_elementwise_max() {
        let mut p = ModelParams::structure(2);
        p.insert("child.lin.w", Tensor::identity(FEATURE_DIM));
        let kids = rand_t(10, FEATURE_DIM, 9);
        let out = eval(&p, |t, b| {
            let k = t.leaf(kids.clone());
            aggregate_children(t, b, k)
        });
        for c in 0..FEATURE_DIM {
            let m = (0..10).map(|r| kids.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(out.get(0, c), m);
        }
        let one = rand_t(1, FEATURE_DIM, 4);
        let same = eval(&p, |t, b| {
            let k = t.leaf(one.clone());
            aggregate_children(t, b, k)
        });
        assert_eq!(same, one);
    }

    #[test]
    fn zero_context_is_zero() {
        let mut p = ModelParams::structure(2);
        p.insert("ctx.lin.b", Tensor::zeros(1, FEATURE_DIM));
        let out = eval(&p, |t, b| {
            let c = t.leaf(Tensor::zeros(2, FEATURE_DIM));
            let q = t.leaf(Tensor::zeros(1, FEATURE_DIM));
            inject_parent_context(t, b, c, q)
        });
        assert_eq!(out.shape(), &[2, FEATURE_DIM]);
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn zero_relation_weights_give_one_half() {
        let mut p = ModelParams::structure(3);
        p.insert("edge.tau.w", Tensor::zeros(WIDE_DIM, 4));
        let x = rand_t(3, FEATURE_DIM, 1);
        let probs = eval(&p, |t, b| {
            let xv = t.leaf(x.clone());
            classify_relations(t, b, xv, &[(0, 1), (1, 2)]).probs
        });
        assert!(probs.data().iter().all(|&v| v == 0.5));
        assert!(kept_edges(&probs).is_empty());
    }

    #[test]
    fn keep_rule_uses_strict_threshold() {
        let probs = Tensor::from_rows(&[
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.1, 0.5000001, 0.2, 0.0],
            vec![0.9, 0.0, 0.0, 0.0],
        ]);
        assert_eq!(kept_edges(&probs), vec![1, 2]);
        let sets = relation_sets(&probs);
        assert!(sets[0].is_empty());
        assert_eq!(sets[2].len(), 1);
    }

    #[test]
    fn without_edges_nodes_are_independent() {
        let p = ModelParams::structure(5);
        let x = rand_t(3, FEATURE_DIM, 2);
        let mut x2 = x.clone();
        for c in 0..FEATURE_DIM {
            x2.set(2, c, 0.3);
        }
        let a = eval(&p, |t, b| {
            let xv = t.leaf(x.clone());
            message_pass(t, b, xv, &[(0, 1)], None, &[])
        });
        let b2 = eval(&p, |t, b| {
            let xv = t.leaf(x2.clone());
            message_pass(t, b, xv, &[(0, 1)], None, &[])
        });
        assert_eq!(a.row_slice(0), b2.row_slice(0));
        assert_eq!(a.row_slice(1), b2.row_slice(1));
        assert_ne!(a.row_slice(2), b2.row_slice(2));
    }

    #[test]
    fn two_rounds_reach_two_hops() {
        // path a - b - c, plus an isolated d
        let p = ModelParams::structure(6);
        let x = rand_t(4, FEATURE_DIM, 3);
        let y = rand_t(3, WIDE_DIM, 4);
        let pairs = [(0, 1), (1, 2), (2, 3)];
        let run = |x: &Tensor| {
            eval(&p, |t, b| {
                let xv = t.leaf(x.clone());
                let yv = t.leaf(y.clone());
                message_pass(t, b, xv, &pairs, Some(yv), &[0, 1])
            })
        };
        let base = run(&x);
        let mut pert = x.clone();
        for c in 0..FEATURE_DIM {
            pert.set(0, c, x.get(0, c) + 0.5);
        }
        let moved = run(&pert);
        assert_ne!(base.row_slice(2), moved.row_slice(2), "two-hop influence");
        assert_eq!(base.row_slice(3), moved.row_slice(3), "no path to d");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn encoders_are_order_free(seed in 0u64..10_000) {
            let p = ModelParams::structure(seed % 7);
            let x = rand_t(11, 3, seed);
            let perm = permutation(11, seed + 1);
            let a = eval(&p, |t, b| encode_part(t, b, &x).unwrap());
            let b2 = eval(&p, |t, b| encode_part(t, b, &permute_rows(&x, &perm)).unwrap());
            prop_assert_eq!(a, b2);

            let kids = rand_t(6, FEATURE_DIM, seed + 2);
            let perm = permutation(6, seed + 3);
            let a = eval(&p, |t, b| { let k = t.leaf(kids.clone()); aggregate_children(t, b, k) });
            let b2 = eval(&p, |t, b| { let k = t.leaf(permute_rows(&kids, &perm)); aggregate_children(t, b, k) });
            prop_assert_eq!(a, b2);
        }

        #[test]
        fn message_passing_is_equivariant(seed in 0u64..10_000) {
            let p = ModelParams::structure(seed % 5);
            let n = 5;
            let x = rand_t(n, FEATURE_DIM, seed);
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let y = rand_t(pairs.len(), WIDE_DIM, seed + 1);
            let kept: Vec<usize> = (0..pairs.len()).filter(|k| (k + seed as usize) % 3 != 0).collect();
            let base = eval(&p, |t, b| {
                let xv = t.leaf(x.clone());
                let yv = t.leaf(y.clone());
                message_pass(t, b, xv, &pairs, Some(yv), &kept)
            });
            // relabel nodes by `perm` and list the kept edges in reverse
            let perm = permutation(n, seed + 2);
            let mut inv = vec![0; n];
            for (new, &old) in perm.iter().enumerate() {
                inv[old] = new;
            }
            let xp = permute_rows(&x, &perm);
            let pairs_p: Vec<(usize, usize)> = kept.iter().rev().map(|&k| (inv[pairs[k].1], inv[pairs[k].0])).collect();
            let rows: Vec<usize> = kept.iter().rev().copied().collect();
            let yp = permute_rows(&y, &rows);
            let all: Vec<usize> = (0..pairs_p.len()).collect();
            let moved = eval(&p, |t, b| {
                let xv = t.leaf(xp.clone());
                let yv = t.leaf(yp.clone());
                message_pass(t, b, xv, &pairs_p, Some(yv), &all)
            });
            for (new, &old) in perm.iter().enumerate() {
                prop_assert_eq!(moved.row_slice(new), base.row_slice(old));
            }
        }
    }

    #[test]
    fn zero_heads_decode_the_robust_range() {
        let mut p = ModelParams::structure(7);
        for name in ["box.offset", "box.scale", "box.rot"] {
            let w = p.get(&format!("{name}.w")).unwrap().clone();
            p.insert(format!("{name}.w"), Tensor::zeros(w.rows(), w.cols()));
            p.insert(format!("{name}.b"), Tensor::zeros(1, w.cols()));
        }
        let pts: Vec<Vec3> = (0..101).map(|i| Vec3::new(i as f64 / 100.0, 0.0, 0.5)).collect();
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        let x = tape.leaf(rand_t(1, FEATURE_DIM, 1));
        let bv = decode_box(&mut tape, &b, x, &pts).unwrap();
        let bx = bv.to_box(&tape).unwrap();
        // identity fallback; symmetric data: mid-range equals the centroid
        assert_eq!(bx.rotation, crate::geom::UnitQuaternion::IDENTITY);
        assert_abs_diff_eq!(bx.translation.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(bx.translation.z, 0.5, epsilon = 1e-12);
        // 2% quantiles of 101 evenly spaced points: 0.02 .. 0.98
        assert_abs_diff_eq!(bx.scale.x, std::f64::consts::LN_2 * 0.96, epsilon = 1e-12);
        assert_abs_diff_eq!(bx.scale.y, std::f64::consts::LN_2 * EXTENT_FLOOR, epsilon = 1e-18);
    }

    #[test]
    fn decoded_boxes_are_valid_for_any_weights() {
        for seed in 0..5 {
            let p = ModelParams::structure(seed);
            let pts: Vec<Vec3> = (0..30).map(|i| Vec3::new((i % 7) as f64, (i % 3) as f64, 0.1 * i as f64)).collect();
            let mut tape = Tape::new();
            let b = p.bind(&mut tape);
            let x = tape.leaf(rand_t(1, FEATURE_DIM, seed + 10).map(|v| 20.0 * v));
            let bv = decode_box(&mut tape, &b, x, &pts).unwrap();
            let bx = bv.to_box(&tape).unwrap();
            let q = bx.rotation.to_array();
            assert_abs_diff_eq!(q.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(bx.scale.x > 0.0 && bx.scale.y > 0.0 && bx.scale.z > 0.0);
        }
    }

    #[test]
    fn merge_score_depends_on_order() {
        let labels = 3;
        let p = ModelParams::merge(11, labels);
        let pts: Vec<Vec3> = (0..40).map(|i| Vec3::new(0.01 * i as f64, (i % 5) as f64 * 0.1, 0.0)).collect();
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (10..40).collect();
        let input = MergeInputs {
            points: &pts,
            segments: vec![&a, &b],
            labels: vec![0, 2],
            features: vec![rand_t(1, FEATURE_DIM, 1).into_data(), rand_t(1, FEATURE_DIM, 2).into_data()],
            root: rand_t(1, FEATURE_DIM, 3).into_data(),
        };
        let s = eval(&p, |t, bd| merge_forward(t, bd, labels, &input, &[(0, 1), (1, 0)]).unwrap());
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_ne!(s.get(0, 0), s.get(1, 0));
    }

    #[test]
    fn subsample_is_strided() {
        let idx: Vec<usize> = (0..10).collect();
        assert_eq!(subsample(&idx, 20), idx);
        assert_eq!(subsample(&idx, 5), vec![0, 2, 4, 6, 8]);
    }
}
