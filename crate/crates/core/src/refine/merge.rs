use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::structure::{build_hierarchy, Hierarchy, NodeId, Segment, Taxonomy};
use crate::{Error, Result};

/// Merge probability a decision must exceed to be executed.
pub const MERGE_THRESHOLD: f64 = 0.7;

/// A scored proposal to attach leaf `source` to leaf `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeDecision {
    pub source: NodeId,
    pub target: NodeId,
    pub score: f64,
    pub applied: bool,
}

impl MergeDecision {
    /// `applied` is set exactly when `score > threshold`.
    pub fn new(source: NodeId, target: NodeId, score: f64, threshold: f64) -> Self {
        MergeDecision {
            source,
            target,
            score,
            applied: score > threshold,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionLine {
    source: NodeId,
    target: NodeId,
    score: f64,
}

/// One `{"source":..,"target":..,"score":..}` object per line.
pub fn decisions_to_json_lines(decisions: &[MergeDecision]) -> String {
    let mut s = String::new();
    for d in decisions {
        let line = DecisionLine {
            source: d.source,
            target: d.target,
            score: d.score,
        };
        s.push_str(&serde_json::to_string(&line).expect("decision serializes"));
        s.push('\n');
    }
    s
}

/// Parses JSON-lines decisions, recomputing `applied` against `threshold`.
/// Blank lines are skipped.
pub fn decisions_from_json_lines(text: &str, threshold: f64) -> Result<Vec<MergeDecision>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: DecisionLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("merge decisions line {}", n + 1), e.to_string()))?;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::InvalidProbability(d.score));
        }
        out.push(MergeDecision::new(d.source, d.target, d.score, threshold));
    }
    Ok(out)
}

/// Final owner of every leaf `0..n` after executing the `(source, target)`
/// merges: targets are chased to a fixed point, and a cycle collapses onto
/// its lowest id.
pub fn resolve_targets(n: usize, merges: &[(NodeId, NodeId)]) -> Vec<NodeId> {
    let mut next: Vec<Option<NodeId>> = vec![None; n];
    for &(s, t) in merges {
        if s != t {
            next[s] = Some(t);
        }
    }
    let mut rep: Vec<Option<NodeId>> = vec![None; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut on_path = HashSet::new();
        let mut cur = start;
        let found = loop {
            if let Some(r) = rep[cur] {
                break r;
            }
            if !on_path.insert(cur) {
                let pos = path.iter().position(|&p| p == cur).unwrap();
                break *path[pos..].iter().min().unwrap();
            }
            path.push(cur);
            match next[cur] {
                Some(t) => cur = t,
                None => break cur,
            }
        };
        for p in path {
            rep[p] = Some(found);
        }
    }
    rep.into_iter().map(|r| r.unwrap()).collect()
}

/// Result of executing merges.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub segments: Vec<Segment>,
    pub hierarchy: Hierarchy,
    /// For every input segment, the index of the output segment that now
    /// holds its points.
    pub old_to_new: Vec<usize>,
    /// Number of decisions executed.
    pub applied: usize,
}

/// Executes every decision scoring above `merge_threshold`: the source
/// segment's points join the target and the source leaf disappears; the
/// surviving segment keeps the target's label. Leaf ids of `h` must be the
/// segment indices. The hierarchy is rebuilt from the surviving segments;
/// boxes are left for the caller to re-estimate. When nothing is executed
/// the input is returned unchanged.
pub fn apply_merges(
    points: &[Vec3],
    segments: &[Segment],
    h: &Hierarchy,
    decisions: &[MergeDecision],
    merge_threshold: f64,
    taxonomy: &Taxonomy,
) -> Result<MergeOutcome> {
    let n = segments.len();
    if h.leaf_count() != n || h.leaves().iter().enumerate().any(|(i, &l)| i != l) {
        return Err(Error::InvalidHierarchy(
            "hierarchy leaves do not correspond to the segment list".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut merges = Vec::new();
    for d in decisions {
        for id in [d.source, d.target] {
            if id >= n {
                return Err(Error::UnknownNode(id));
            }
        }
        if !seen.insert(d.source) {
            return Err(Error::DuplicateSource(d.source));
        }
        if d.score > merge_threshold && d.source != d.target {
            merges.push((d.source, d.target));
        }
    }
    if merges.is_empty() {
        return Ok(MergeOutcome {
            segments: segments.to_vec(),
            hierarchy: h.clone(),
            old_to_new: (0..n).collect(),
            applied: 0,
        });
    }
    let rep = resolve_targets(n, &merges);
    let mut new_index = vec![usize::MAX; n];
    let mut out: Vec<Segment> = Vec::new();
    for i in 0..n {
        if rep[i] == i {
            new_index[i] = out.len();
            out.push(segments[i].clone());
        }
    }
    for i in 0..n {
        if rep[i] != i {
            out[new_index[rep[i]]].absorb(&segments[i]);
        }
    }
    let old_to_new = (0..n).map(|i| new_index[rep[i]]).collect();
    let hierarchy = build_hierarchy(points, &out, taxonomy)?;
    Ok(MergeOutcome {
        segments: out,
        hierarchy,
        old_to_new,
        applied: merges.len(),
    })
}
