//! Seeded training of the structure and merge networks, and held-out
//! evaluation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    merge_forward, merge_loss, structure_forward, structure_loss, Adam, AdamConfig, LossTerms, ModelParams, Tape,
    Tensor,
};
use crate::geom::{OrientedBox, UnitQuaternion, Vec3};
use crate::metrics::{
    compensated_mean, edge_error, part_ap, pooled_segmentation_map, ScoredSegment, SegmentedShape, AP_IOU_THRESHOLD,
    SEG_IOU_THRESHOLD,
};
use crate::pipeline::{merge_inputs, MergeTally, MergeNet, Model, StructureNet};
use crate::refine::{detect_conflicts, CONFLICT_IOU_THRESHOLD, MERGE_THRESHOLD};
use crate::structure::{build_hierarchy, Hierarchy, Segment, Taxonomy};
use crate::synthio::ShapeRecord;
use crate::{Error, Result};

/// Training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub structure_epochs: usize,
    pub merge_epochs: usize,
    /// Stop each phase after this many optimizer steps.
    pub max_steps: Option<u64>,
    pub structure_optimizer: AdamConfig,
    pub merge_optimizer: AdamConfig,
    pub iou_threshold: f64,
    pub merge_threshold: f64,
    /// Evaluate on the held-out split every this many epochs (0: only at
    /// the end of each phase).
    pub eval_every: usize,
    /// Where to write the diagnostic dump when a loss turns non-finite.
    pub dump_dir: Option<PathBuf>,
    /// Add copies of the training shapes mirrored across the x and z
    /// planes to the merge training set.
    pub merge_mirror: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 16,
            structure_epochs: 30,
            merge_epochs: 150,
            max_steps: None,
            structure_optimizer: AdamConfig::with_learning_rate(5e-4),
            merge_optimizer: AdamConfig::with_learning_rate(1e-4),
            iou_threshold: CONFLICT_IOU_THRESHOLD,
            merge_threshold: MERGE_THRESHOLD,
            eval_every: 0,
            dump_dir: None,
            merge_mirror: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) || !(0.0..=1.0).contains(&self.merge_threshold) {
            return Err(Error::Config("thresholds must lie in [0, 1]".into()));
        }
        self.structure_optimizer.validate()?;
        self.merge_optimizer.validate()
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str_auto(text: &str, context: &str) -> Result<Self> {
        let cfg: TrainConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::parse(context, e))?
        } else {
            toml::from_str(text).map_err(|e| Error::parse(context, e))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A record prepared for training: the observed segmentation with its
/// tree, and the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub points: Vec<Vec3>,
    pub segments: Vec<Segment>,
    pub observed: Hierarchy,
    pub gt: Hierarchy,
    pub gt_segments: Vec<Segment>,
    pub gt_merges: Vec<(usize, usize)>,
}

impl Sample {
    pub fn from_record(rec: &ShapeRecord, taxonomy: &Taxonomy) -> Result<Self> {
        let points = rec.points().to_vec();
        let segments = rec.segments();
        let observed = build_hierarchy(&points, &segments, taxonomy)?;
        Ok(Sample {
            name: rec.name.clone(),
            points,
            segments,
            observed,
            gt: rec.gt_hierarchy.clone(),
            gt_segments: rec.gt_segments(),
            gt_merges: rec.gt_merges.clone(),
        })
    }

    /// The same shape reflected across the plane normal to `axis` (0, 1 or
    /// 2 for x, y, z). Segment and node indices are unchanged.
    pub fn mirrored(&self, axis: usize, taxonomy: &Taxonomy) -> Result<Sample> {
        let flip = |v: Vec3| {
            let mut a = v.to_array();
            a[axis] = -a[axis];
            Vec3::from_array(a)
        };
        let points: Vec<Vec3> = self.points.iter().map(|&p| flip(p)).collect();
        let mut gt = self.gt.clone();
        for id in 0..gt.len() {
            if let Some(b) = gt.node(id).bbox {
                // reflecting a rotation keeps the quaternion component along
                // the mirror normal and negates the other two
                let mut q = b.rotation.to_array();
                for (k, c) in q[1..].iter_mut().enumerate() {
                    if k != axis {
                        *c = -*c;
                    }
                }
                let rotation = UnitQuaternion::new(q[0], q[1], q[2], q[3]).unwrap_or(UnitQuaternion::IDENTITY);
                gt.node_mut(id).bbox = Some(OrientedBox::new(flip(b.translation), b.scale, rotation)?);
            }
        }
        Ok(Sample {
            name: format!("{}~m{axis}", self.name),
            observed: build_hierarchy(&points, &self.segments, taxonomy)?,
            points,
            segments: self.segments.clone(),
            gt,
            gt_segments: self.gt_segments.clone(),
            gt_merges: self.gt_merges.clone(),
        })
    }
}

/// One row of the training curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub phase: &'static str,
    pub epoch: usize,
    pub steps: u64,
    pub loss: f64,
    pub ap_25: Option<f64>,
    pub edge_error: Option<f64>,
    pub merge_accuracy: Option<f64>,
}

/// Curves as CSV with a header row; missing values are empty.
pub fn curves_to_csv(curves: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut s = String::from("phase,epoch,steps,loss,ap_25,edge_error,merge_accuracy\n");
    for c in curves {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.phase,
            c.epoch,
            c.steps,
            c.loss,
            opt(c.ap_25),
            opt(c.edge_error),
            opt(c.merge_accuracy)
        ));
    }
    s
}

/// Held-out scores of a full model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub shapes: usize,
    /// Mean part AP@0.25 after refinement.
    pub ap_25: f64,
    /// Mean edge error after refinement.
    pub edge_error: f64,
    /// Mean part AP@0.25 before refinement.
    pub ap_25_initial: f64,
    /// Fraction of correct decisions over the scored candidates.
    pub merge_accuracy: f64,
    /// Fraction of ground-truth merges detected as candidates.
    pub candidate_recall: f64,
    pub merges: MergeTally,
    pub seg_map_before: f64,
    pub seg_map_after: f64,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub curves: Vec<EpochMetrics>,
    /// Mean batch loss of every optimizer step, both phases in order.
    pub step_losses: Vec<f64>,
    pub evaluation: Option<Evaluation>,
}

fn accumulate(acc: &mut BTreeMap<String, Tensor>, name: &str, g: &Tensor) {
    match acc.get_mut(name) {
        Some(t) => t.add_assign(g),
        None => {
            acc.insert(name.to_string(), g.clone());
        }
    }
}

#[derive(Serialize)]
struct NumericDump<'a> {
    phase: &'a str,
    step: u64,
    batch: Vec<&'a str>,
    terms: Vec<Option<[f64; 4]>>,
    non_finite_params: Vec<&'a str>,
}

fn numeric_failure(cfg: &TrainConfig, dump: NumericDump<'_>) -> Error {
    let mut msg = format!(
        "non-finite {} loss at step {} (batch: {})",
        dump.phase,
        dump.step,
        dump.batch.join(" ")
    );
    log::error!("{msg}");
    if let Some(dir) = &cfg.dump_dir {
        let path = dir.join("nan_dump.json");
        let text = serde_json::to_string_pretty(&dump).expect("dump serializes");
        match crate::synthio::write_text(&path, &text) {
            Ok(()) => msg.push_str(&format!("; dump written to {}", path.display())),
            Err(e) => msg.push_str(&format!("; dump failed: {e}")),
        }
    }
    Error::Numeric(msg)
}

/// Gradient of the mean structure loss over `batch`.
fn structure_batch(params: &ModelParams, batch: &[&Sample]) -> Result<(BTreeMap<String, Tensor>, f64, Vec<LossTerms>)> {
    let mut acc = BTreeMap::new();
    let mut terms = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = structure_forward(&mut tape, &bound, &s.points, &s.observed)?;
        let (loss, t) = structure_loss(&mut tape, &out, &s.observed, &s.gt)?;
        terms.push(t);
        if !t.total.is_finite() {
            continue;
        }
        let scaled = tape.scale(loss, scale);
        let grads = tape.backward(scaled);
        for (name, &v) in bound.iter() {
            if let Some(g) = grads.get(v) {
                accumulate(&mut acc, name, g);
            }
        }
    }
    let mean = compensated_mean(terms.iter().map(|t| t.total));
    Ok((acc, mean, terms))
}

/// A training shape's merge candidates with labels.
#[derive(Debug, Clone)]
struct MergeSample {
    sample: usize,
    annotated: Hierarchy,
    pairs: Vec<(usize, usize)>,
    labels: Vec<f64>,
}

/// Candidates for merge training: the detected conflicts plus every
/// ground-truth merge and its reverse.
fn merge_samples(structure: &StructureNet, samples: &[Sample], iou_threshold: f64) -> Result<Vec<MergeSample>> {
    let mut out = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let mut h = s.observed.clone();
        structure.annotate(&s.points, &mut h)?;
        let mut pairs: Vec<(usize, usize)> = detect_conflicts(&h, iou_threshold)?
            .entries()
            .iter()
            .map(|e| (e.source, e.target))
            .collect();
        for &(a, b) in &s.gt_merges {
            for p in [(a, b), (b, a)] {
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let labels = pairs
            .iter()
            .map(|p| if s.gt_merges.contains(p) { 1.0 } else { 0.0 })
            .collect();
        out.push(MergeSample {
            sample: k,
            annotated: h,
            pairs,
            labels,
        });
    }
    Ok(out)
}

fn merge_batch(
    params: &ModelParams,
    labels: usize,
    samples: &[Sample],
    batch: &[&MergeSample],
) -> Result<(BTreeMap<String, Tensor>, f64, Vec<f64>)> {
    let mut acc = BTreeMap::new();
    let mut losses = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for m in batch {
        let s = &samples[m.sample];
        let input = merge_inputs(&s.points, &s.segments, &m.annotated, labels)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let scores = merge_forward(&mut tape, &bound, labels, &input, &m.pairs)?;
        let loss = merge_loss(&mut tape, scores, &m.labels);
        let l = tape.scalar(loss);
        losses.push(l);
        if !l.is_finite() {
            continue;
        }
        let scaled = tape.scale(loss, scale);
        let grads = tape.backward(scaled);
        for (name, &v) in bound.iter() {
            if let Some(g) = grads.get(v) {
                accumulate(&mut acc, name, g);
            }
        }
    }
    let mean = compensated_mean(losses.iter().copied());
    Ok((acc, mean, losses))
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Mean AP@0.25 and edge error of structure inference alone.
pub fn evaluate_structure(structure: &StructureNet, samples: &[Sample]) -> Result<(f64, f64)> {
    let mut aps = Vec::with_capacity(samples.len());
    let mut ees = Vec::with_capacity(samples.len());
    for s in samples {
        let mut h = s.observed.clone();
        structure.annotate(&s.points, &mut h)?;
        aps.push(part_ap(&h, &s.gt, AP_IOU_THRESHOLD)?);
        ees.push(edge_error(&h, &s.gt)?);
    }
    Ok((compensated_mean(aps), compensated_mean(ees)))
}

/// Full pipeline on every sample: inference, one refinement round,
/// re-inference; scores against the ground truth.
pub fn evaluate(model: &Model, samples: &[Sample], iou_threshold: f64, merge_threshold: f64) -> Result<Evaluation> {
    let mut ap = Vec::new();
    let mut ap0 = Vec::new();
    let mut ee = Vec::new();
    let mut tally = MergeTally::default();
    let mut before: Vec<Vec<ScoredSegment>> = Vec::new();
    let mut after: Vec<Vec<ScoredSegment>> = Vec::new();
    for s in samples {
        let run = model.run(&s.points, &s.segments, iou_threshold, merge_threshold)?;
        ap0.push(part_ap(&run.initial, &s.gt, AP_IOU_THRESHOLD)?);
        ap.push(part_ap(&run.refined.hierarchy, &s.gt, AP_IOU_THRESHOLD)?);
        ee.push(edge_error(&run.refined.hierarchy, &s.gt)?);
        tally.add(MergeTally::new(&run.refined.decisions, &s.gt_merges));
        before.push(s.segments.iter().cloned().map(ScoredSegment::new).collect());
        after.push(run.refined.segments.iter().cloned().map(ScoredSegment::new).collect());
    }
    let pooled = |preds: &[Vec<ScoredSegment>]| -> Result<f64> {
        let shapes: Vec<SegmentedShape<'_>> = samples
            .iter()
            .zip(preds)
            .map(|(s, p)| SegmentedShape {
                pred: p,
                gt: &s.gt_segments,
                n_points: s.points.len(),
            })
            .collect();
        Ok(pooled_segmentation_map(&shapes, SEG_IOU_THRESHOLD)?.mean)
    };
    Ok(Evaluation {
        shapes: samples.len(),
        ap_25: compensated_mean(ap),
        edge_error: compensated_mean(ee),
        ap_25_initial: compensated_mean(ap0),
        merge_accuracy: tally.accuracy(),
        candidate_recall: tally.candidate_recall(),
        merges: tally,
        seg_map_before: pooled(&before)?,
        seg_map_after: pooled(&after)?,
    })
}

/// Trains the structure network on `train`, then the merge network on the
/// frozen structure network's outputs, and evaluates on `held_out`
/// (skipped when empty). Deterministic for a given seed.
pub fn train(train: &[Sample], held_out: &[Sample], taxonomy: &Taxonomy, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (structure, mut curves, mut step_losses) = train_structure(train, held_out, cfg)?;
    let (merge, mcurves, mlosses) = train_merge(&structure, train, held_out, taxonomy, cfg)?;
    curves.extend(mcurves);
    step_losses.extend(mlosses);
    let model = Model::new(structure, merge, taxonomy.clone())?;
    let evaluation = if held_out.is_empty() {
        None
    } else {
        Some(evaluate(&model, held_out, cfg.iou_threshold, cfg.merge_threshold)?)
    };
    Ok(TrainOutcome {
        model,
        curves,
        step_losses,
        evaluation,
    })
}

fn wants_eval(cfg: &TrainConfig, held_out: &[Sample], epoch: usize, last: usize) -> bool {
    !held_out.is_empty() && (epoch == last || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0))
}

/// Structure phase: trains the structure network with the total loss.
/// Returns the network, per-epoch curves and per-step losses.
pub fn train_structure(
    train: &[Sample],
    held_out: &[Sample],
    cfg: &TrainConfig,
) -> Result<(StructureNet, Vec<EpochMetrics>, Vec<f64>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training shapes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curves = Vec::new();
    let mut step_losses = Vec::new();
    let mut sp = ModelParams::structure(cfg.seed);
    let mut opt = Adam::new(cfg.structure_optimizer, &sp);
    'structure: for epoch in 1..=cfg.structure_epochs {
        let order = shuffled(train.len(), &mut rng);
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| opt.steps() >= m) {
                break 'structure;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (grads, loss, terms) = structure_batch(&sp, &batch)?;
            if !loss.is_finite() {
                return Err(numeric_failure(
                    cfg,
                    NumericDump {
                        phase: "structure",
                        step: opt.steps(),
                        batch: batch.iter().map(|s| s.name.as_str()).collect(),
                        terms: terms.iter().map(|t| Some([t.boxes, t.norm, t.edge, t.total])).collect(),
                        non_finite_params: sp.iter().filter(|(_, t)| !t.is_finite()).map(|(k, _)| k.as_str()).collect(),
                    },
                ));
            }
            opt.step(&mut sp, &grads)?;
            step_losses.push(loss);
            epoch_losses.push(loss);
        }
        let (ap, ee) = if wants_eval(cfg, held_out, epoch, cfg.structure_epochs) {
            let (a, e) = evaluate_structure(&StructureNet::new(sp.clone())?, held_out)?;
            (Some(a), Some(e))
        } else {
            (None, None)
        };
        let m = EpochMetrics {
            phase: "structure",
            epoch,
            steps: opt.steps(),
            loss: compensated_mean(epoch_losses),
            ap_25: ap,
            edge_error: ee,
            merge_accuracy: None,
        };
        log::info!("structure epoch {epoch}: loss {:.5} ap {:?} ee {:?}", m.loss, m.ap_25, m.edge_error);
        curves.push(m);
    }
    Ok((StructureNet::new(sp)?, curves, step_losses))
}

/// Merge phase: trains the merge network with the merge loss on the
/// outputs of a frozen structure network.
pub fn train_merge(
    structure: &StructureNet,
    train: &[Sample],
    held_out: &[Sample],
    taxonomy: &Taxonomy,
    cfg: &TrainConfig,
) -> Result<(MergeNet, Vec<EpochMetrics>, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut curves = Vec::new();
    let mut step_losses = Vec::new();
    let labels = taxonomy.len();
    let mut mp = ModelParams::merge(cfg.seed.wrapping_add(1), labels);
    let mut pool = train.to_vec();
    if cfg.merge_mirror {
        for s in train {
            pool.push(s.mirrored(0, taxonomy)?);
            pool.push(s.mirrored(2, taxonomy)?);
        }
    }
    let train = &pool[..];
    let msamples = merge_samples(structure, train, cfg.iou_threshold)?;
    let mut opt = Adam::new(cfg.merge_optimizer, &mp);
    'merge: for epoch in 1..=cfg.merge_epochs {
        if msamples.is_empty() {
            break;
        }
        let order = shuffled(msamples.len(), &mut rng);
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| opt.steps() >= m) {
                break 'merge;
            }
            let batch: Vec<&MergeSample> = chunk.iter().map(|&i| &msamples[i]).collect();
            let (grads, loss, losses) = merge_batch(&mp, labels, train, &batch)?;
            if !loss.is_finite() {
                return Err(numeric_failure(
                    cfg,
                    NumericDump {
                        phase: "merge",
                        step: opt.steps(),
                        batch: batch.iter().map(|m| train[m.sample].name.as_str()).collect(),
                        terms: losses.iter().map(|&l| Some([f64::NAN, f64::NAN, f64::NAN, l])).collect(),
                        non_finite_params: mp.iter().filter(|(_, t)| !t.is_finite()).map(|(k, _)| k.as_str()).collect(),
                    },
                ));
            }
            opt.step(&mut mp, &grads)?;
            step_losses.push(loss);
            epoch_losses.push(loss);
        }
        let acc = if wants_eval(cfg, held_out, epoch, cfg.merge_epochs) {
            let model = Model::new(structure.clone(), MergeNet::new(mp.clone())?, taxonomy.clone())?;
            Some(evaluate(&model, held_out, cfg.iou_threshold, cfg.merge_threshold)?.merge_accuracy)
        } else {
            None
        };
        let m = EpochMetrics {
            phase: "merge",
            epoch,
            steps: opt.steps(),
            loss: compensated_mean(epoch_losses),
            ap_25: None,
            edge_error: None,
            merge_accuracy: acc,
        };
        log::info!("merge epoch {epoch}: loss {:.5} accuracy {:?}", m.loss, m.merge_accuracy);
        curves.push(m);
    }
    Ok((MergeNet::new(mp)?, curves, step_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthio::{gen_records, Category, GenConfig};

    fn samples(n: usize, seed: u64, overseg: f64) -> (Vec<Sample>, Taxonomy) {
        let cat = Category::Chair;
        let tax = cat.taxonomy();
        let cfg = GenConfig { points: 300, oversegment_prob: overseg, ..GenConfig::default() };
        let recs = gen_records(cat, n, seed, &cfg).unwrap();
        (recs.iter().map(|r| Sample::from_record(r, &tax).unwrap()).collect(), tax)
    }

    fn quick() -> TrainConfig {
        TrainConfig { batch_size: 2, structure_epochs: 1, merge_epochs: 1, max_steps: Some(2), ..TrainConfig::default() }
    }

    #[test]
    fn training_is_deterministic() {
        let (s, tax) = samples(4, 3, 1.0);
        let a = train(&s, &s[..1], &tax, &quick()).unwrap();
        let b = train(&s, &s[..1], &tax, &quick()).unwrap();
        assert_eq!(a.step_losses, b.step_losses);
        assert_eq!(a.model.combined_params(), b.model.combined_params());
        assert!(a.step_losses.iter().all(|l| l.is_finite()));
        assert_eq!(a.evaluation.as_ref().unwrap().shapes, 1);
    }

    #[test]
    fn batch_gradient_is_mean_of_example_gradients() {
        let (s, _) = samples(2, 5, 0.0);
        let p = ModelParams::structure(3);
        let (both, loss, _) = structure_batch(&p, &[&s[0], &s[1]]).unwrap();
        let (a, la, _) = structure_batch(&p, &[&s[0]]).unwrap();
        let (b, lb, _) = structure_batch(&p, &[&s[1]]).unwrap();
        assert!((loss - 0.5 * (la + lb)).abs() < 1e-12);
        // one tape holding both losses gives the same gradient
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let mut total = None;
        for x in &s {
            let out = structure_forward(&mut tape, &bound, &x.points, &x.observed).unwrap();
            let (l, _) = structure_loss(&mut tape, &out, &x.observed, &x.gt).unwrap();
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l),
            });
        }
        let total = tape.scale(total.unwrap(), 0.5);
        let joint = tape.backward(total);
        assert_eq!(both.keys().collect::<Vec<_>>(), a.keys().collect::<Vec<_>>());
        for (name, g) in &both {
            let v = bound.var(name);
            let j = joint.get(v).unwrap();
            for k in 0..g.len() {
                let sum = 0.5 * (a[name].data()[k] + b[name].data()[k]);
                assert!((g.data()[k] - sum).abs() <= 1e-12 * (1.0 + sum.abs()), "{name}[{k}]");
                assert!((j.data()[k] - sum).abs() <= 1e-12 * (1.0 + sum.abs()), "{name}[{k}] joint");
            }
        }
    }

    #[test]
    fn mirroring_reflects_points_and_boxes() {
        let (s, tax) = samples(1, 4, 1.0);
        let mut s = s.into_iter().next().unwrap();
        // give one box a genuine rotation
        let leaf = s.gt.leaves()[0];
        let b = *s.gt.bbox(leaf).unwrap();
        let q = UnitQuaternion::from_axis_angle(Vec3::new(0.3, 1.0, -0.2), 0.7);
        s.gt.node_mut(leaf).bbox = Some(OrientedBox::new(b.translation, b.scale, q).unwrap());
        for axis in 0..3 {
            let m = s.mirrored(axis, &tax).unwrap();
            assert_eq!(m.segments, s.segments);
            assert_eq!(m.gt_merges, s.gt_merges);
            let back = m.mirrored(axis, &tax).unwrap();
            assert_eq!(back.points, s.points);
            for id in 0..s.gt.len() {
                let (orig, refl) = (s.gt.bbox(id).unwrap(), m.gt.bbox(id).unwrap());
                // every reflected corner is a corner of the reflected box
                for c in orig.corners() {
                    let mut a = c.to_array();
                    a[axis] = -a[axis];
                    let r = Vec3::from_array(a);
                    assert!(refl.corners().iter().any(|k| k.dist(r) < 1e-9), "axis {axis} node {id}");
                }
            }
        }
    }

    #[test]
    fn non_finite_loss_writes_dump() {
        let (s, tax) = samples(2, 1, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            structure_epochs: 3,
            merge_epochs: 0,
            max_steps: None,
            structure_optimizer: AdamConfig::with_learning_rate(1e300),
            dump_dir: Some(dir.path().to_path_buf()),
            ..TrainConfig::default()
        };
        let err = train(&s, &[], &tax, &cfg).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        let dump: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("nan_dump.json")).unwrap()).unwrap();
        assert_eq!(dump["phase"], "structure");
        assert!(dump["step"].as_u64().unwrap() >= 1);
        assert_eq!(dump["batch"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn config_parses_toml_and_json() {
        let t = TrainConfig::from_str_auto("seed = 7\nbatch_size = 4\n[structure_optimizer]\nlearning_rate = 0.001\n", "t").unwrap();
        assert_eq!((t.seed, t.batch_size), (7, 4));
        assert_eq!(t.structure_optimizer.learning_rate, 0.001);
        assert_eq!(t.merge_optimizer, TrainConfig::default().merge_optimizer);
        let j = TrainConfig::from_str_auto(r#"{"merge_epochs": 3}"#, "j").unwrap();
        assert_eq!(j.merge_epochs, 3);
        assert!(TrainConfig::from_str_auto("bogus_key = 1", "t").is_err());
        assert!(matches!(TrainConfig::from_str_auto("batch_size = 0", "t"), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_match_documented_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.structure_optimizer.learning_rate, 5e-4);
        assert_eq!(c.merge_optimizer.learning_rate, 1e-4);
        assert_eq!((c.iou_threshold, c.merge_threshold), (0.09, 0.7));
    }

    #[test]
    fn curves_serialize_to_csv() {
        let c = vec![EpochMetrics {
            phase: "structure",
            epoch: 1,
            steps: 3,
            loss: 0.5,
            ap_25: Some(0.9),
            edge_error: None,
            merge_accuracy: None,
        }];
        let csv = curves_to_csv(&c);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("phase,epoch"));
        assert!(lines.next().unwrap().starts_with("structure,1,3,0.5,0.9,"));
    }
}
