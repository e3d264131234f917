//! Shape-structure toolkit.
//!
//! Infers an n-ary part hierarchy with oriented boxes and typed sibling
//! relations from a labeled point cloud, refines the segmentation by merging
//! conflicting parts, scores the results, and ranks shapes by structural
//! similarity.
//!
//! Module map:
//!
//! - [`geom`]: vectors, quaternions, oriented boxes, PCA fitting, box IoU, chamfer distance
//! - [`structure`]: segments, taxonomies and the part hierarchy
//! - [`assign`]: Hungarian assignment and node correspondences
//! - [`metrics`]: part AP, edge error, segmentation mAP, retrieval distances
//! - [`refine`]: conflict detection and merge execution
//! - [`nnet`]: reverse-mode differentiation core, networks, losses and training
//! - [`synthio`]: synthetic shapes, file formats and dataset ingestion
//! - [`pipeline`]: end-to-end inference and refinement drivers

pub mod assign;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod nnet;
pub mod pipeline;
pub mod refine;
pub mod structure;
pub mod synthio;

pub use error::{Error, Result};
