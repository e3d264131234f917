use rayon::prelude::*;
use serde::Serialize;

use crate::assign::match_same_semantics;
use crate::geom::{chamfer_sq, Vec3};
use crate::structure::Hierarchy;
use crate::Result;

/// Number of leaves of `h` left without a same-semantics partner in `o`,
/// plus those of `o` left without one in `h`.
fn one_way(a: &Hierarchy, b: &Hierarchy) -> Result<usize> {
    let m = match_same_semantics(a, b)?;
    let matched = m
        .pairs
        .iter()
        .filter(|&&(p, g)| a.node(p).is_leaf() && b.node(g).is_leaf())
        .count();
    Ok(a.leaf_count() + b.leaf_count() - 2 * matched)
}

/// Count of leaves without a same-semantics counterpart on the other side.
/// Zero means the two shapes have the same part inventory. The matching is
/// run in both directions and the smaller count is kept, which makes the
/// distance exactly symmetric even when the assignment has ties.
pub fn structure_difference(a: &Hierarchy, b: &Hierarchy) -> Result<usize> {
    Ok(one_way(a, b)?.min(one_way(b, a)?))
}

/// A corpus entry: its points and inferred structure.
#[derive(Debug, Clone)]
pub struct RetrievalItem {
    pub name: String,
    pub points: Vec<Vec3>,
    pub hierarchy: Hierarchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Rank by structure difference, ties broken by chamfer distance.
    Structure,
    /// Rank by squared chamfer distance only.
    Chamfer,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "structure" => Ok(RetrievalMode::Structure),
            "chamfer" => Ok(RetrievalMode::Chamfer),
            o => Err(format!("unknown retrieval mode '{o}' (expected structure|chamfer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedHit {
    pub index: usize,
    pub name: String,
    pub structure_distance: usize,
    pub chamfer: f64,
}

/// Scores every corpus entry except `exclude` against the query and returns
/// them best first. Remaining ties are broken by corpus position.
pub fn rank_corpus(
    query: &RetrievalItem,
    corpus: &[RetrievalItem],
    mode: RetrievalMode,
    exclude: Option<usize>,
) -> Result<Vec<RankedHit>> {
    let mut hits = corpus
        .par_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, c)| {
            Ok(RankedHit {
                index: i,
                name: c.name.clone(),
                structure_distance: structure_difference(&query.hierarchy, &c.hierarchy)?,
                chamfer: chamfer_sq(&query.points, &c.points)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    hits.sort_by(|a, b| {
        let primary = match mode {
            RetrievalMode::Structure => a.structure_distance.cmp(&b.structure_distance),
            RetrievalMode::Chamfer => std::cmp::Ordering::Equal,
        };
        primary.then(a.chamfer.total_cmp(&b.chamfer)).then(a.index.cmp(&b.index))
    });
    Ok(hits)
}
