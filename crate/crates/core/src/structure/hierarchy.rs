use std::collections::BTreeSet;

use super::{LabelId, RelationSet};
use crate::geom::{OrientedBox, Vec3};
use crate::{Error, Result};

pub type NodeId = usize;

/// Width of node feature vectors.
pub const FEATURE_DIM: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct PartNode {
    pub id: NodeId,
    pub semantic: LabelId,
    pub bbox: Option<OrientedBox>,
    /// Sorted point indices of the node's region (union over children for
    /// internal nodes).
    pub point_indices: Vec<usize>,
    pub feature: Option<Vec<f64>>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl PartNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A typed relation between two siblings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub a: NodeId,
    pub b: NodeId,
    pub types: RelationSet,
}

/// Part structure tree. Leaf ids come first (`0..leaf_count`, in segment
/// order), internal nodes follow.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    nodes: Vec<PartNode>,
    root: NodeId,
    relations: Vec<Relation>,
}

impl Hierarchy {
    /// Assembles a hierarchy from a node table. Parent links are derived from
    /// the child lists; the result is validated.
    pub fn from_nodes(mut nodes: Vec<PartNode>, root: NodeId) -> Result<Self> {
        for (i, n) in nodes.iter_mut().enumerate() {
            n.id = i;
            n.parent = None;
        }
        for i in 0..nodes.len() {
            for c in nodes[i].children.clone() {
                if c >= nodes.len() {
                    return Err(Error::UnknownNode(c));
                }
                if nodes[c].parent.is_some() {
                    return Err(Error::InvalidHierarchy(format!("node {c} has two parents")));
                }
                nodes[c].parent = Some(i);
            }
        }
        let h = Hierarchy {
            nodes,
            root,
            relations: Vec::new(),
        };
        h.validate()?;
        Ok(h)
    }

    /// Two-level hierarchy: a root labelled `root_label` over one leaf per
    /// `(label, box)`. Leaf `i` owns the single point index `i`; the root
    /// box is the bounding box of the leaf corners.
    pub fn flat(root_label: LabelId, leaves: &[(LabelId, OrientedBox)]) -> Result<Self> {
        let n = leaves.len();
        let mut nodes: Vec<PartNode> = leaves
            .iter()
            .enumerate()
            .map(|(i, (l, b))| PartNode {
                id: i,
                semantic: *l,
                bbox: Some(*b),
                point_indices: vec![i],
                feature: None,
                parent: None,
                children: Vec::new(),
            })
            .collect();
        let root_box = crate::geom::Aabb::from_points(leaves.iter().flat_map(|(_, b)| b.corners()))
            .map(|bb| OrientedBox::from_aabb(&bb));
        nodes.push(PartNode {
            id: n,
            semantic: root_label,
            bbox: root_box,
            point_indices: (0..n).collect(),
            feature: None,
            parent: None,
            children: (0..n).collect(),
        });
        Self::from_nodes(nodes, n)
    }

    pub fn nodes(&self) -> &[PartNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &PartNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut PartNode {
        &mut self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.id)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Internal nodes (sibling-group parents), in preorder.
    pub fn subsets(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&i| !self.nodes[i].is_leaf())
            .collect()
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.nodes[n].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Children before parents.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = self.preorder();
        out.reverse();
        out
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            d += 1;
            cur = p;
        }
        d
    }

    /// Node ids grouped by depth (index 0 holds the root).
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let mut levels: Vec<Vec<NodeId>> = Vec::new();
        for id in self.preorder() {
            let d = self.depth(id);
            if levels.len() <= d {
                levels.resize(d + 1, Vec::new());
            }
            levels[d].push(id);
        }
        for l in &mut levels {
            l.sort_unstable();
        }
        levels
    }

    pub fn bbox(&self, id: NodeId) -> Result<&OrientedBox> {
        self.nodes
            .get(id)
            .ok_or(Error::UnknownNode(id))?
            .bbox
            .as_ref()
            .ok_or(Error::MissingGeometry(id))
    }

    pub fn require_leaf_boxes(&self) -> Result<()> {
        for n in &self.nodes {
            if n.is_leaf() && n.bbox.is_none() {
                return Err(Error::MissingGeometry(n.id));
            }
        }
        Ok(())
    }

    pub fn require_all_boxes(&self) -> Result<()> {
        for n in &self.nodes {
            if n.bbox.is_none() {
                return Err(Error::MissingGeometry(n.id));
            }
        }
        Ok(())
    }

    pub fn node_centroid(&self, id: NodeId, points: &[Vec3]) -> Vec3 {
        let idx = &self.nodes[id].point_indices;
        let mut s = Vec3::ZERO;
        for &i in idx {
            s += points[i];
        }
        s / idx.len().max(1) as f64
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Replaces the relation list. Every relation must join two distinct
    /// siblings; empty type sets are dropped.
    pub fn set_relations(&mut self, relations: Vec<Relation>) -> Result<()> {
        let mut out = Vec::with_capacity(relations.len());
        for r in relations {
            if r.a >= self.nodes.len() {
                return Err(Error::UnknownNode(r.a));
            }
            if r.b >= self.nodes.len() {
                return Err(Error::UnknownNode(r.b));
            }
            if r.a == r.b || self.nodes[r.a].parent.is_none() || self.nodes[r.a].parent != self.nodes[r.b].parent {
                return Err(Error::InvalidHierarchy(format!(
                    "relation ({}, {}) does not join siblings",
                    r.a, r.b
                )));
            }
            if !r.types.is_empty() {
                out.push(r);
            }
        }
        self.relations = out;
        Ok(())
    }

    pub fn relation_between(&self, a: NodeId, b: NodeId) -> RelationSet {
        let mut s = RelationSet::empty();
        for r in &self.relations {
            if (r.a == a && r.b == b) || (r.a == b && r.b == a) {
                s = s.union(r.types);
            }
        }
        s
    }

    /// Relations whose endpoints are children of `parent`.
    pub fn subset_relations(&self, parent: NodeId) -> Vec<Relation> {
        self.relations
            .iter()
            .filter(|r| self.nodes[r.a].parent == Some(parent))
            .copied()
            .collect()
    }

    /// Structural checks: single root, acyclic, leaves nonempty, internal
    /// regions equal to the union of their children, features of the right
    /// width, relations between siblings only.
    pub fn validate(&self) -> Result<()> {
        if self.root >= self.nodes.len() {
            return Err(Error::InvalidHierarchy("root out of range".into()));
        }
        if self.nodes[self.root].parent.is_some() {
            return Err(Error::InvalidHierarchy("root has a parent".into()));
        }
        let order = self.preorder();
        if order.len() != self.nodes.len() {
            return Err(Error::InvalidHierarchy(format!(
                "{} nodes reachable from the root, {} in table",
                order.len(),
                self.nodes.len()
            )));
        }
        let unique: BTreeSet<_> = order.iter().collect();
        if unique.len() != order.len() {
            return Err(Error::InvalidHierarchy("cycle or shared child".into()));
        }
        for n in &self.nodes {
            if let Some(f) = &n.feature {
                if f.len() != FEATURE_DIM {
                    return Err(Error::InvalidHierarchy(format!(
                        "node {} feature has length {}",
                        n.id,
                        f.len()
                    )));
                }
            }
            if n.is_leaf() {
                if n.point_indices.is_empty() {
                    return Err(Error::InvalidHierarchy(format!("leaf {} has no points", n.id)));
                }
            } else {
                let mut union: Vec<usize> = n
                    .children
                    .iter()
                    .flat_map(|&c| self.nodes[c].point_indices.iter().copied())
                    .collect();
                union.sort_unstable();
                union.dedup();
                if union != n.point_indices {
                    return Err(Error::InvalidHierarchy(format!(
                        "node {} region differs from the union of its children",
                        n.id
                    )));
                }
            }
        }
        for r in &self.relations {
            if r.a == r.b || self.nodes[r.a].parent.is_none() || self.nodes[r.a].parent != self.nodes[r.b].parent {
                return Err(Error::InvalidHierarchy(format!(
                    "relation ({}, {}) does not join siblings",
                    r.a, r.b
                )));
            }
        }
        Ok(())
    }
}
