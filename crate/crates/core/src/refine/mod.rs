//! Segmentation refinement driven by the inferred structure: overlapping
//! leaf boxes flag merge candidates, and accepted merges attach a source
//! segment to its target before the hierarchy is rebuilt.

mod conflicts;
mod merge;

pub use conflicts::{detect_conflicts, CandidateEntry, CandidateMatrix, CONFLICT_IOU_THRESHOLD};
pub use merge::{
    apply_merges, decisions_from_json_lines, decisions_to_json_lines, resolve_targets, MergeDecision, MergeOutcome,
    MERGE_THRESHOLD,
};
