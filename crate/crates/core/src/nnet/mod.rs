//! Neural components: a dense tensor, a reverse-mode tape, the structure
//! and merge networks, their losses, the optimizer, checkpoints and the
//! training loops.

mod checkpoint;
mod checks;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
mod tape;
mod tensor;
mod train;

pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_FLOOR, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
pub use params::{Bound, ModelParams, POINT_HIDDEN, RELATION_TYPES, SCALE_BIAS_INIT, WIDE_DIM};
pub use tape::{quantile_ranks, Gradients, Tape, Var, PROB_EPS, QUAT_NORM_FLOOR};
pub use tensor::Tensor;
pub use model::{
    aggregate_children, build_merge_feature, candidate_input, classify_relations, decode_box, encode_candidates,
    encode_part, encode_parts, fuse_node_feature, fuse_structure_code, inject_parent_context, kept_edges,
    merge_forward, message_pass, points_tensor, predict_merge, probs_row, relation_sets, structure_forward,
    subsample, BoxVars, MergeInputs, PairOutputs, StructureOutputs, SubsetOutputs, EDGE_THRESHOLD,
    ENCODER_POINTS, EXTENT_QUANTILE, MESSAGE_ITERATIONS, OFFSET_RANGE,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{
    box_corners, box_loss, edge_loss, focal_loss, merge_loss, node_correspondence, norm_loss, structure_loss,
    total_loss, LossTerms, FOCAL_ALPHA, FOCAL_GAMMA, LAMBDA_BOX, LAMBDA_NORM,
};
pub use optim::{Adam, AdamConfig};
pub use train::{
    curves_to_csv, evaluate, evaluate_structure, train, train_merge, train_structure, EpochMetrics, Evaluation, Sample, TrainConfig, TrainOutcome,
};
pub use checks::{operation_gradchecks, CHECK_PROBES};
