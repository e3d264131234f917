//! Geometric substrate: vectors, rotations, oriented boxes and the distances
//! built on them.
//!
//! Shapes are normalized to a unit-diagonal bounding box, so all lengths here
//! are in those model units.

mod chamfer;
mod iou;
mod obb;
mod quat;
mod vec;

pub use chamfer::{chamfer_sq, chamfer_sq_brute_force, PointIndex};
pub use iou::{aabb_iou, box_iou, box_iou_with, separation_gap, IouConfig};
pub use obb::{pca_obb, OrientedBox, EXTENT_FLOOR};
pub use quat::UnitQuaternion;
pub use vec::{centroid, Aabb, Vec3};
