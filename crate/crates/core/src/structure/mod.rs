//! Part segments, label taxonomies and the part hierarchy: a tree of part
//! nodes with parent/child edges and typed relations between siblings.

mod build;
mod hierarchy;
mod relations;
mod taxonomy;

pub use build::{build_hierarchy, single_linkage_clusters, MAX_SUBSET_SIZE, SPATIAL_CUT};
pub use hierarchy::{Hierarchy, NodeId, PartNode, Relation, FEATURE_DIM};
pub use relations::{relation_ground_truth, RelationSet, RelationType};
pub use taxonomy::{LabelId, Taxonomy, TaxonomyLabel, TaxonomyTree};

use crate::{Error, Result};

/// A segmented region of a point cloud with its semantic label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    point_indices: Vec<usize>,
    pub semantic: LabelId,
}

impl Segment {
    /// `indices` must be nonempty, unique and below `n_points`. They are
    /// stored sorted.
    pub fn new(mut indices: Vec<usize>, semantic: LabelId, n_points: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSegmentation("empty segment".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSegmentation("duplicate point index in segment".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= n_points {
                return Err(Error::InvalidSegmentation(format!(
                    "point index {last} out of range for {n_points} points"
                )));
            }
        }
        Ok(Segment {
            point_indices: indices,
            semantic,
        })
    }

    pub fn point_indices(&self) -> &[usize] {
        &self.point_indices
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Absorbs another segment's points.
    pub fn absorb(&mut self, other: &Segment) {
        self.point_indices.extend_from_slice(&other.point_indices);
        self.point_indices.sort_unstable();
        self.point_indices.dedup();
    }
}
