//! Evaluation metrics: class-agnostic part AP, relation edge error,
//! segmentation mAP, and the structural distance used for retrieval.

mod ap;
mod edges;
mod report;
mod retrieval;
mod segmap;

pub use ap::{part_ap, part_counts, PartCounts, AP_IOU_THRESHOLD};
pub use edges::{edge_counts, edge_error, EdgeCounts};
pub use report::{compensated_mean, MetricReport, ShapeMetrics};
pub use retrieval::{rank_corpus, structure_difference, RankedHit, RetrievalItem, RetrievalMode};
pub use segmap::{
    pooled_segmentation_map, segment_iou, segmentation_map, ScoredSegment, SegmentedShape, SegmentationMap,
    SEG_IOU_THRESHOLD,
};
