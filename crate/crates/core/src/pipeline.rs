//! End-to-end drivers: the rule-based baseline, network inference, and the
//! detect → score → merge → re-infer refinement loop.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::geom::{pca_obb, Vec3};
use crate::nnet::{
    load_checkpoint, merge_forward, save_checkpoint, structure_forward, MergeInputs, ModelParams, Tape,
};
use crate::refine::{apply_merges, detect_conflicts, MergeDecision};
use crate::structure::{build_hierarchy, Hierarchy, Segment, Taxonomy};
use crate::{Error, Result};

/// Checkpoint file name inside a model directory.
pub const MODEL_FILE: &str = "model.sseg";
/// Taxonomy file name inside a model directory.
pub const TAXONOMY_FILE: &str = "taxonomy.json";

const STRUCTURE_PREFIX: &str = "structure/";
const MERGE_PREFIX: &str = "merge/";

/// Baseline: the taxonomy-driven tree with a PCA box on every node and no
/// relations.
pub fn rule_based(points: &[Vec3], segments: &[Segment], taxonomy: &Taxonomy) -> Result<Hierarchy> {
    let mut h = build_hierarchy(points, segments, taxonomy)?;
    for id in 0..h.len() {
        let pts: Vec<Vec3> = h.node(id).point_indices.iter().map(|&i| points[i]).collect();
        h.node_mut(id).bbox = Some(pca_obb(&pts)?);
    }
    Ok(h)
}

/// Trained structure network.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureNet {
    params: ModelParams,
}

impl StructureNet {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.check_layout(&ModelParams::structure(0))?;
        Ok(StructureNet { params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Predicts boxes, features and relations for every node of `h`.
    pub fn annotate(&self, points: &[Vec3], h: &mut Hierarchy) -> Result<()> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = structure_forward(&mut tape, &bound, points, h)?;
        out.write_into(&tape, h)
    }

    /// Builds the tree over `segments` and annotates it.
    pub fn infer(&self, points: &[Vec3], segments: &[Segment], taxonomy: &Taxonomy) -> Result<Hierarchy> {
        let mut h = build_hierarchy(points, segments, taxonomy)?;
        self.annotate(points, &mut h)?;
        Ok(h)
    }
}

/// Trained merge network.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeNet {
    params: ModelParams,
    labels: usize,
}

impl MergeNet {
    pub fn new(params: ModelParams) -> Result<Self> {
        let labels = params.merge_label_count()?;
        params.check_layout(&ModelParams::merge(0, labels))?;
        Ok(MergeNet { params, labels })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Number of semantic classes of the one-hot label input.
    pub fn label_count(&self) -> usize {
        self.labels
    }

    /// Merge probability of each ordered leaf pair `(source, target)`. The
    /// hierarchy must carry structure-network features; leaf ids are
    /// segment indices.
    pub fn score_pairs(&self, points: &[Vec3], segments: &[Segment], h: &Hierarchy, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let input = merge_inputs(points, segments, h, self.labels)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let scores = merge_forward(&mut tape, &bound, self.labels, &input, pairs)?;
        Ok(tape.value(scores).data().to_vec())
    }

    /// Conflict detection on the predicted leaf boxes followed by scoring;
    /// one decision per candidate.
    pub fn decide(
        &self,
        points: &[Vec3],
        segments: &[Segment],
        h: &Hierarchy,
        iou_threshold: f64,
        merge_threshold: f64,
    ) -> Result<Vec<MergeDecision>> {
        let candidates = detect_conflicts(h, iou_threshold)?;
        let pairs: Vec<(usize, usize)> = candidates.entries().iter().map(|e| (e.source, e.target)).collect();
        let scores = self.score_pairs(points, segments, h, &pairs)?;
        Ok(pairs
            .iter()
            .zip(scores)
            .map(|(&(s, t), p)| MergeDecision::new(s, t, p, merge_threshold))
            .collect())
    }
}

/// Gathers the merge-network inputs of every leaf segment.
pub fn merge_inputs<'a>(points: &'a [Vec3], segments: &'a [Segment], h: &Hierarchy, labels: usize) -> Result<MergeInputs<'a>> {
    if h.leaf_count() != segments.len() {
        return Err(Error::InvalidHierarchy(
            "hierarchy leaves do not correspond to the segment list".into(),
        ));
    }
    let feature = |id: usize| -> Result<Vec<f64>> {
        h.node(id)
            .feature
            .clone()
            .ok_or_else(|| Error::InvalidHierarchy(format!("node {id} has no feature; run the structure network first")))
    };
    let mut label_idx = Vec::with_capacity(segments.len());
    for s in segments {
        let l = s.semantic.index();
        if l >= labels {
            return Err(Error::UnknownLabel(format!("label id {l} outside the merge network's {labels} classes")));
        }
        label_idx.push(l);
    }
    Ok(MergeInputs {
        points,
        segments: segments.iter().map(Segment::point_indices).collect(),
        labels: label_idx,
        features: (0..segments.len()).map(feature).collect::<Result<_>>()?,
        root: feature(h.root())?,
    })
}

/// Both networks together with the taxonomy they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub structure: StructureNet,
    pub merge: MergeNet,
    pub taxonomy: Taxonomy,
}

fn model_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.extension().is_some_and(|e| e == "sseg") {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join(TAXONOMY_FILE))
    } else {
        (path.join(MODEL_FILE), path.join(TAXONOMY_FILE))
    }
}

impl Model {
    pub fn new(structure: StructureNet, merge: MergeNet, taxonomy: Taxonomy) -> Result<Self> {
        if merge.label_count() != taxonomy.len() {
            return Err(Error::Config(format!(
                "merge network expects {} labels, taxonomy has {}",
                merge.label_count(),
                taxonomy.len()
            )));
        }
        Ok(Model {
            structure,
            merge,
            taxonomy,
        })
    }

    /// All tensors in one parameter set, prefixed by network.
    pub fn combined_params(&self) -> ModelParams {
        let mut all = ModelParams::new();
        for (k, t) in self.structure.params().iter() {
            all.insert(format!("{STRUCTURE_PREFIX}{k}"), t.clone());
        }
        for (k, t) in self.merge.params().iter() {
            all.insert(format!("{MERGE_PREFIX}{k}"), t.clone());
        }
        all
    }

    /// Splits a combined parameter set back into the two networks.
    pub fn from_combined(all: &ModelParams, taxonomy: Taxonomy) -> Result<Self> {
        let (mut s, mut m) = (ModelParams::new(), ModelParams::new());
        for (k, t) in all.iter() {
            if let Some(rest) = k.strip_prefix(STRUCTURE_PREFIX) {
                s.insert(rest, t.clone());
            } else if let Some(rest) = k.strip_prefix(MERGE_PREFIX) {
                m.insert(rest, t.clone());
            } else {
                return Err(Error::Config(format!("unexpected tensor {k} in model checkpoint")));
            }
        }
        Model::new(StructureNet::new(s)?, MergeNet::new(m)?, taxonomy)
    }

    /// Writes the checkpoint and the taxonomy. `path` is a directory, or a
    /// `.sseg` file whose directory receives the taxonomy.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (ckpt, tax) = model_paths(path);
        save_checkpoint(&ckpt, &self.combined_params())?;
        crate::synthio::write_text(&tax, &self.taxonomy.to_json_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (ckpt, tax) = model_paths(path);
        let params = load_checkpoint(&ckpt)?;
        let taxonomy = Taxonomy::from_json_str(&crate::synthio::read_text(&tax)?)
            .map_err(|e| Error::parse(tax.display().to_string(), e))?;
        Model::from_combined(&params, taxonomy)
    }

    /// Structure inference on the given segmentation.
    pub fn infer(&self, points: &[Vec3], segments: &[Segment]) -> Result<Hierarchy> {
        self.structure.infer(points, segments, &self.taxonomy)
    }

    /// One refinement round on an annotated hierarchy: detect conflicts,
    /// score them, execute the merges above `merge_threshold`, and re-infer
    /// the structure of the merged segmentation.
    pub fn refine(
        &self,
        points: &[Vec3],
        segments: &[Segment],
        h: &Hierarchy,
        iou_threshold: f64,
        merge_threshold: f64,
    ) -> Result<Refinement> {
        let decisions = self.merge.decide(points, segments, h, iou_threshold, merge_threshold)?;
        let outcome = apply_merges(points, segments, h, &decisions, merge_threshold, &self.taxonomy)?;
        let hierarchy = if outcome.applied == 0 {
            h.clone()
        } else {
            let mut r = outcome.hierarchy;
            self.structure.annotate(points, &mut r)?;
            r
        };
        Ok(Refinement {
            decisions,
            segments: outcome.segments,
            hierarchy,
            old_to_new: outcome.old_to_new,
            applied: outcome.applied,
        })
    }

    /// Inference followed by one refinement round.
    pub fn run(&self, points: &[Vec3], segments: &[Segment], iou_threshold: f64, merge_threshold: f64) -> Result<PipelineRun> {
        let initial = self.infer(points, segments)?;
        let refined = self.refine(points, segments, &initial, iou_threshold, merge_threshold)?;
        Ok(PipelineRun { initial, refined })
    }
}

/// Output of [`Model::refine`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub decisions: Vec<MergeDecision>,
    pub segments: Vec<Segment>,
    /// Re-inferred hierarchy of the merged segmentation.
    pub hierarchy: Hierarchy,
    pub old_to_new: Vec<usize>,
    pub applied: usize,
}

/// Output of [`Model::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub initial: Hierarchy,
    pub refined: Refinement,
}

/// Counts behind the merge metrics of one or more shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MergeTally {
    /// Decisions whose execution agrees with the ground truth: applied
    /// exactly when `(source, target)` is a ground-truth merge.
    pub correct: usize,
    /// Scored candidate pairs.
    pub decisions: usize,
    /// Ground-truth merges.
    pub gt_merges: usize,
    /// Ground-truth merges that were among the candidates.
    pub gt_detected: usize,
}

impl MergeTally {
    pub fn new(decisions: &[MergeDecision], gt_merges: &[(usize, usize)]) -> Self {
        let proposed = |g: &(usize, usize)| decisions.iter().any(|d| (d.source, d.target) == *g);
        MergeTally {
            correct: decisions
                .iter()
                .filter(|d| d.applied == gt_merges.contains(&(d.source, d.target)))
                .count(),
            decisions: decisions.len(),
            gt_merges: gt_merges.len(),
            gt_detected: gt_merges.iter().filter(|g| proposed(g)).count(),
        }
    }

    pub fn add(&mut self, o: MergeTally) {
        self.correct += o.correct;
        self.decisions += o.decisions;
        self.gt_merges += o.gt_merges;
        self.gt_detected += o.gt_detected;
    }

    /// Fraction of correct decisions; 1 when nothing was decided.
    pub fn accuracy(&self) -> f64 {
        if self.decisions == 0 {
            1.0
        } else {
            self.correct as f64 / self.decisions as f64
        }
    }

    /// Fraction of ground-truth merges that became candidates; 1 when
    /// there are none.
    pub fn candidate_recall(&self) -> f64 {
        if self.gt_merges == 0 {
            1.0
        } else {
            self.gt_detected as f64 / self.gt_merges as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthio::{gen_shape, Category, GenConfig};

    #[test]
    fn rule_based_boxes_every_node() {
        let rec = gen_shape(Category::Chair, 3, &GenConfig::default()).unwrap();
        let tax = Category::Chair.taxonomy();
        let h = rule_based(rec.points(), &rec.segments(), &tax).unwrap();
        h.require_all_boxes().unwrap();
        assert!(h.relations().is_empty());
        assert_eq!(h.leaf_count(), rec.segments().len());
    }

    #[test]
    fn untrained_model_round_trips_and_runs() {
        let tax = Category::Table.taxonomy();
        let model = Model::new(
            StructureNet::new(ModelParams::structure(1)).unwrap(),
            MergeNet::new(ModelParams::merge(2, tax.len())).unwrap(),
            tax,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = Model::load(dir.path()).unwrap();
        assert_eq!(back, model);

        let rec = gen_shape(Category::Table, 8, &GenConfig::default()).unwrap();
        let run = model.run(rec.points(), &rec.segments(), 0.09, 0.7).unwrap();
        run.initial.require_all_boxes().unwrap();
        assert!(run.initial.nodes().iter().all(|n| n.feature.is_some()));
        run.refined.hierarchy.require_all_boxes().unwrap();
    }

    #[test]
    fn tally_separates_accuracy_and_recall() {
        let d = [MergeDecision::new(3, 1, 0.9, 0.7), MergeDecision::new(1, 3, 0.2, 0.7)];
        let t = MergeTally::new(&d, &[(3, 1)]);
        assert_eq!(t, MergeTally { correct: 2, decisions: 2, gt_merges: 1, gt_detected: 1 });
        let mut t = MergeTally::new(&d, &[(4, 0)]);
        assert_eq!((t.correct, t.gt_detected), (1, 0));
        assert_eq!((t.accuracy(), t.candidate_recall()), (0.5, 0.0));
        t.add(MergeTally::new(&[], &[]));
        assert_eq!(t.decisions, 2);
        assert_eq!(MergeTally::default().accuracy(), 1.0);
    }
}
