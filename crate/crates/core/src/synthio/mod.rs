//! Synthetic toy shapes with ground-truth structure and merges, the JSON
//! file formats, dataset directories and an importer for externally
//! annotated shapes.
//!
//! Shape file (`<name>.shape.json`):
//!
//! ```json
//! {"name": "toy-chair-0001", "category": "toy-chair", "normalized": true,
//!  "points": [[0.1, -0.2, 0.05], ...], "semantics": [2, ...],
//!  "instances": [0, ...], "gt_merges": [[6, 1]]}
//! ```
//!
//! `semantics` are taxonomy label ids, `instances` dense segment ids, and
//! `gt_merges` optional `[source, target]` instance pairs.
//!
//! Hierarchy file (`<name>.hierarchy.json`), one nested object per node:
//!
//! ```json
//! {"id": 7, "label": "chair", "points": [0, 1, ...],
//!  "box": {"t": [0, 0, 0], "s": [0.5, 0.8, 0.4], "q": [1, 0, 0, 0]},
//!  "children": [...],
//!  "relations": [{"a": 6, "b": 4, "types": ["adjacent"]}]}
//! ```
//!
//! `relations` on a node join two of its children by id. The taxonomy file
//! is a nested `{"label", "multi_instance", "children"}` tree.

mod cloud;
mod dataset;
mod gen;
mod io;

pub use cloud::{LabeledCloud, Normalization};
pub use dataset::{
    gen_dataset, gen_records, import_partnet, record_seed, Dataset, Manifest, ManifestEntry, SkipReport, Split,
};
pub use gen::{
    gen_shape, realize, Blueprint, Category, ChairParams, GenConfig, PartSpec, ShapeParams, StorageParams,
    TableParams, MIN_PART_POINTS, RELATION_TOL, SPLIT_BAND,
};
pub(crate) use io::{read_text, write_text};
pub use io::{
    hierarchy_from_str, hierarchy_to_string, load_shape, read_hierarchy, read_shape, record_paths, save_shape,
    shape_from_str, shape_stem, shape_to_string, write_hierarchy, write_shape, ShapeFile,
};

use crate::geom::Vec3;
use crate::structure::{Hierarchy, Segment};

/// A labeled cloud bundled with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub name: String,
    pub category: Option<String>,
    pub cloud: LabeledCloud,
    pub gt_hierarchy: Hierarchy,
    /// `(source, target)` instance ids whose merge restores the true parts.
    pub gt_merges: Vec<(usize, usize)>,
}

impl ShapeRecord {
    /// The true parts, one segment per ground-truth leaf.
    pub fn gt_segments(&self) -> Vec<Segment> {
        let h = &self.gt_hierarchy;
        h.leaves()
            .into_iter()
            .map(|l| {
                let n = h.node(l);
                Segment::new(n.point_indices.clone(), n.semantic, self.cloud.len()).expect("leaf regions are valid")
            })
            .collect()
    }

    /// Observed segmentation: one segment per instance id.
    pub fn segments(&self) -> Vec<Segment> {
        self.cloud.segments()
    }

    pub fn points(&self) -> &[Vec3] {
        self.cloud.points()
    }
}
