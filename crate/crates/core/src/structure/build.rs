use super::{Hierarchy, LabelId, NodeId, PartNode, Segment, Taxonomy};
use crate::geom::{Aabb, Vec3};
use crate::{Error, Result};

/// Maximum number of children in one sibling group.
pub const MAX_SUBSET_SIZE: usize = 10;

/// Single-linkage cut for separating instances of a multi-instance label,
/// relative to the shape diagonal.
pub const SPATIAL_CUT: f64 = 0.25;

/// Builds the part tree bottom-up from labeled segments.
///
/// Leaves are the segments, in input order (leaf `i` is segment `i`). Each
/// segment is placed under the chain of labels the taxonomy gives for its
/// semantic; segments sharing an ancestor label become siblings under one
/// node of that label. Instances of a `multi_instance` label are told apart
/// by single-linkage clustering of segment centroids, cut at
/// [`SPATIAL_CUT`] times the shape diagonal. A group with more than
/// [`MAX_SUBSET_SIZE`] children is split the same way, by recursively
/// cutting the longest spanning-tree edge, and the pieces are wrapped in
/// intermediate nodes carrying the parent's label.
pub fn build_hierarchy(
    points: &[Vec3],
    segments: &[Segment],
    taxonomy: &Taxonomy,
) -> Result<Hierarchy> {
    if segments.is_empty() {
        return Err(Error::EmptyShape);
    }
    for s in segments {
        taxonomy.check(s.semantic)?;
        if let Some(&last) = s.point_indices().last() {
            if last >= points.len() {
                return Err(Error::InvalidSegmentation(format!(
                    "point index {last} out of range for {} points",
                    points.len()
                )));
            }
        }
    }
    let mut b = Builder {
        points,
        taxonomy,
        chains: segments.iter().map(|s| taxonomy.chain(s.semantic)).collect(),
        semantics: segments.iter().map(|s| s.semantic).collect(),
        nodes: segments
            .iter()
            .enumerate()
            .map(|(i, s)| PartNode {
                id: i,
                semantic: s.semantic,
                bbox: None,
                point_indices: s.point_indices().to_vec(),
                feature: None,
                parent: None,
                children: Vec::new(),
            })
            .collect(),
        cut: 0.0,
    };
    let bb = Aabb::from_points(
        segments
            .iter()
            .flat_map(|s| s.point_indices().iter().map(|&i| points[i])),
    )
    .ok_or(Error::EmptyShape)?;
    b.cut = SPATIAL_CUT * bb.diagonal();

    let root_label = taxonomy.root();
    let all: Vec<usize> = (0..segments.len()).collect();
    if segments.len() == 1 && segments[0].semantic == root_label {
        return Hierarchy::from_nodes(b.nodes, 0);
    }
    let kids = b.group(root_label, &all);
    let root = b.internal(root_label, kids);
    Hierarchy::from_nodes(b.nodes, root)
}

struct Builder<'a> {
    points: &'a [Vec3],
    taxonomy: &'a Taxonomy,
    chains: Vec<Vec<LabelId>>,
    semantics: Vec<LabelId>,
    nodes: Vec<PartNode>,
    cut: f64,
}

impl Builder<'_> {
    /// Nodes forming the children of a `parent`-labelled node that covers
    /// `segs`.
    fn group(&mut self, parent: LabelId, segs: &[usize]) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = segs
            .iter()
            .copied()
            .filter(|&s| self.semantics[s] == parent)
            .collect();
        let depth = self.chains_depth(parent);
        for &c in &self.taxonomy.get(parent).children {
            out.extend(segs.iter().copied().filter(|&s| self.semantics[s] == c));
            let deeper: Vec<usize> = segs
                .iter()
                .copied()
                .filter(|&s| self.semantics[s] != c && self.chains[s].get(depth + 1) == Some(&c))
                .collect();
            if deeper.is_empty() {
                continue;
            }
            let clusters = if self.taxonomy.get(c).multi_instance {
                let cents: Vec<Vec3> = deeper.iter().map(|&s| self.centroid(s)).collect();
                single_linkage_clusters(&cents, self.cut)
                    .into_iter()
                    .map(|cl| cl.into_iter().map(|i| deeper[i]).collect::<Vec<_>>())
                    .collect()
            } else {
                vec![deeper]
            };
            for cl in clusters {
                let kids = self.group(c, &cl);
                let id = self.internal(c, kids);
                out.push(id);
            }
        }
        out
    }

    fn chains_depth(&self, label: LabelId) -> usize {
        self.taxonomy.chain(label).len() - 1
    }

    fn centroid(&self, node: NodeId) -> Vec3 {
        let idx = &self.nodes[node].point_indices;
        let mut s = Vec3::ZERO;
        for &i in idx {
            s += self.points[i];
        }
        s / idx.len() as f64
    }

    fn internal(&mut self, label: LabelId, mut kids: Vec<NodeId>) -> NodeId {
        while kids.len() > MAX_SUBSET_SIZE {
            let groups = self.split(&kids);
            kids = groups
                .into_iter()
                .map(|g| if g.len() == 1 { g[0] } else { self.make_node(label, g) })
                .collect();
        }
        self.make_node(label, kids)
    }

    fn make_node(&mut self, label: LabelId, kids: Vec<NodeId>) -> NodeId {
        let mut pts: Vec<usize> = kids
            .iter()
            .flat_map(|&k| self.nodes[k].point_indices.iter().copied())
            .collect();
        pts.sort_unstable();
        pts.dedup();
        let id = self.nodes.len();
        self.nodes.push(PartNode {
            id,
            semantic: label,
            bbox: None,
            point_indices: pts,
            feature: None,
            parent: None,
            children: kids,
        });
        id
    }

    /// Recursive spatial bisection into groups of at most MAX_SUBSET_SIZE.
    fn split(&self, kids: &[NodeId]) -> Vec<Vec<NodeId>> {
        if kids.len() <= MAX_SUBSET_SIZE {
            return vec![kids.to_vec()];
        }
        let cents: Vec<Vec3> = kids.iter().map(|&k| self.centroid(k)).collect();
        let (left, right) = bisect(&cents);
        let l: Vec<NodeId> = left.into_iter().map(|i| kids[i]).collect();
        let r: Vec<NodeId> = right.into_iter().map(|i| kids[i]).collect();
        let mut out = self.split(&l);
        out.extend(self.split(&r));
        out
    }
}

/// Splits points in two by removing the longest edge of their minimum
/// spanning tree. Both halves keep input order; the half holding index 0
/// comes first.
fn bisect(points: &[Vec3]) -> (Vec<usize>, Vec<usize>) {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for j in 1..n {
        best[j] = points[0].dist(points[j]);
    }
    for _ in 1..n {
        let mut pick = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (pick == usize::MAX || best[j] < best[pick]) {
                pick = j;
            }
        }
        in_tree[pick] = true;
        edges.push((link[pick], pick, best[pick]));
        for j in 0..n {
            if !in_tree[j] {
                let d = points[pick].dist(points[j]);
                if d < best[j] {
                    best[j] = d;
                    link[j] = pick;
                }
            }
        }
    }
    let mut cut = 0;
    for (i, e) in edges.iter().enumerate() {
        if e.2 > edges[cut].2 {
            cut = i;
        }
    }
    let mut uf = UnionFind::new(n);
    for (i, e) in edges.iter().enumerate() {
        if i != cut {
            uf.union(e.0, e.1);
        }
    }
    let r0 = uf.find(0);
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for i in 0..n {
        if uf.find(i) == r0 {
            l.push(i);
        } else {
            r.push(i);
        }
    }
    (l, r)
}

/// Single-linkage clusters of `points`: two points share a cluster when a
/// chain of hops no longer than `cut` joins them. Clusters are ordered by
/// their smallest member; members are ascending.
pub fn single_linkage_clusters(points: &[Vec3], cut: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if points[i].dist(points[j]) <= cut {
                uf.union(i, j);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[r]].push(i);
    }
    clusters
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so results do not depend on union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
