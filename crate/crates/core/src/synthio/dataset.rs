use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gen::{fill_boxes, RELATION_TOL};
use super::io::{load_shape, read_text, record_paths, save_shape, write_text};
use super::{gen_shape, Category, GenConfig, LabeledCloud, ShapeRecord};
use crate::geom::{pca_obb, Vec3};
use crate::structure::{relation_ground_truth, Hierarchy, LabelId, PartNode, Taxonomy, MAX_SUBSET_SIZE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Every fifth record (positions 4, 9, ...) is held out.
    pub fn for_index(i: usize) -> Split {
        if i % 5 == 4 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub shapes: Vec<ManifestEntry>,
}

/// A dataset directory: `taxonomy.json`, `manifest.json` and a `shapes/`
/// folder holding `<name>.shape.json` / `<name>.hierarchy.json` pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    taxonomy: Taxonomy,
    manifest: Manifest,
}

impl Dataset {
    /// Writes `records` as a new dataset under `dir`, assigning splits by
    /// position.
    pub fn create(dir: &Path, taxonomy: &Taxonomy, category: Option<&str>, records: &[ShapeRecord]) -> Result<Dataset> {
        let shapes = dir.join("shapes");
        std::fs::create_dir_all(&shapes).map_err(|e| Error::io(&shapes, e))?;
        write_text(&dir.join("taxonomy.json"), &taxonomy.to_json_string())?;
        let manifest = Manifest {
            category: category.map(str::to_string),
            shapes: records
                .iter()
                .enumerate()
                .map(|(i, r)| ManifestEntry {
                    name: r.name.clone(),
                    split: Split::for_index(i),
                })
                .collect(),
        };
        for r in records {
            save_shape(&shapes, r, taxonomy)?;
        }
        write_text(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(Dataset {
            root: dir.to_path_buf(),
            taxonomy: taxonomy.clone(),
            manifest,
        })
    }

    pub fn open(dir: &Path) -> Result<Dataset> {
        let taxonomy = Taxonomy::from_json_str(&read_text(&dir.join("taxonomy.json"))?)?;
        let mp = dir.join("manifest.json");
        let manifest: Manifest =
            serde_json::from_str(&read_text(&mp)?).map_err(|e| Error::parse(mp.display().to_string(), e))?;
        Ok(Dataset {
            root: dir.to_path_buf(),
            taxonomy,
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn shape_path(&self, name: &str) -> PathBuf {
        record_paths(&self.root.join("shapes"), name).0
    }

    pub fn load(&self, name: &str) -> Result<ShapeRecord> {
        load_shape(&self.shape_path(name), &self.taxonomy)
    }

    /// Records of one split (or all when `None`), in manifest order.
    pub fn load_split(&self, split: Option<Split>) -> Result<Vec<ShapeRecord>> {
        self.manifest
            .shapes
            .par_iter()
            .filter(|e| split.is_none_or(|s| s == e.split))
            .map(|e| self.load(&e.name))
            .collect()
    }
}

/// Seed of record `i` of a generated dataset.
pub fn record_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Generates `count` shapes of `category` (record `i` uses
/// [`record_seed`]`(seed, i)`) and writes them as a dataset.
pub fn gen_dataset(dir: &Path, category: Category, count: usize, seed: u64, config: &GenConfig) -> Result<Dataset> {
    let records = gen_records(category, count, seed, config)?;
    Dataset::create(dir, &category.taxonomy(), Some(category.name()), &records)
}

/// In-memory version of [`gen_dataset`].
pub fn gen_records(category: Category, count: usize, seed: u64, config: &GenConfig) -> Result<Vec<ShapeRecord>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = gen_shape(category, record_seed(seed, i), config)?;
            r.name = format!("{}-{i:04}", category.name());
            Ok(r)
        })
        .collect()
}

/// Shapes left out by [`import_partnet`], with the reason.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkipReport {
    pub skipped: Vec<(String, String)>,
}

impl SkipReport {
    pub fn is_empty(&self) -> bool {
        self.skipped.is_empty()
    }

    pub fn len(&self) -> usize {
        self.skipped.len()
    }
}

#[derive(Deserialize)]
struct PointsJson {
    points: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
struct PartJson {
    label: String,
    #[serde(default)]
    points: Vec<usize>,
    #[serde(default)]
    children: Vec<PartJson>,
}

/// Imports every `<id>.points.json` / `<id>.parts.json` pair in `dir`.
///
/// `<id>.points.json` is `{"points": [[x, y, z], ...]}`; `<id>.parts.json`
/// is a nested part tree `{"label", "children": [...], "points": [...]}`
/// whose leaves list the indices of their points. Shapes with a missing
/// file, a label outside the taxonomy, points not covered by exactly one
/// leaf, or a sibling group larger than the subset limit are skipped and
/// reported. An empty directory yields no records and one report entry.
pub fn import_partnet(dir: &Path, taxonomy: &Taxonomy) -> Result<(Vec<ShapeRecord>, SkipReport)> {
    let mut ids = std::collections::BTreeSet::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let f = entry.file_name().to_string_lossy().into_owned();
        for suffix in [".points.json", ".parts.json"] {
            if let Some(id) = f.strip_suffix(suffix) {
                ids.insert(id.to_string());
            }
        }
    }
    let mut report = SkipReport::default();
    let mut records = Vec::new();
    if ids.is_empty() {
        report
            .skipped
            .push((dir.display().to_string(), "no shapes found".to_string()));
    }
    for id in ids {
        match import_one(dir, &id, taxonomy) {
            Ok(r) => records.push(r),
            Err(e) => report.skipped.push((id, e.to_string())),
        }
    }
    Ok((records, report))
}

fn import_one(dir: &Path, id: &str, taxonomy: &Taxonomy) -> Result<ShapeRecord> {
    let pp = dir.join(format!("{id}.points.json"));
    let ap = dir.join(format!("{id}.parts.json"));
    for p in [&pp, &ap] {
        if !p.exists() {
            return Err(Error::parse(id, format!("missing annotation file {}", p.display())));
        }
    }
    let pts: PointsJson = serde_json::from_str(&read_text(&pp)?).map_err(|e| Error::parse(pp.display().to_string(), e))?;
    let tree: PartJson = serde_json::from_str(&read_text(&ap)?).map_err(|e| Error::parse(ap.display().to_string(), e))?;
    let n = pts.points.len();
    if n == 0 {
        return Err(Error::EmptyPointSet);
    }

    // leaves first (preorder), internal nodes after in postorder
    let mut leaves: Vec<(LabelId, Vec<usize>)> = Vec::new();
    collect_leaves(&tree, taxonomy, &mut leaves)?;
    let mut nodes: Vec<PartNode> = leaves
        .iter()
        .enumerate()
        .map(|(i, (l, p))| PartNode {
            id: i,
            semantic: *l,
            bbox: None,
            point_indices: p.clone(),
            feature: None,
            parent: None,
            children: vec![],
        })
        .collect();
    let mut next_leaf = 0;
    let root = build_internal(&tree, taxonomy, &mut nodes, &mut next_leaf)?;

    let mut owner = vec![usize::MAX; n];
    for (i, (_, p)) in leaves.iter().enumerate() {
        for &k in p {
            if k >= n {
                return Err(Error::InvalidSegmentation(format!("point index {k} out of range")));
            }
            if owner[k] != usize::MAX {
                return Err(Error::InvalidSegmentation(format!("point {k} belongs to two parts")));
            }
            owner[k] = i;
        }
    }
    if let Some(k) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::InvalidSegmentation(format!("point {k} has no part")));
    }

    let mut cloud = LabeledCloud::new(
        pts.points.iter().map(|p| Vec3::from_array(*p)).collect(),
        owner.iter().map(|&o| leaves[o].0).collect(),
        owner.iter().map(|&o| o as u32).collect(),
        false,
    )?;
    cloud.normalize()?;
    let mut h = Hierarchy::from_nodes(nodes, root)?;
    if let Some(s) = h.subsets().into_iter().find(|&s| h.children(s).len() > MAX_SUBSET_SIZE) {
        return Err(Error::InvalidHierarchy(format!(
            "node {s} has {} children (limit {MAX_SUBSET_SIZE})",
            h.children(s).len()
        )));
    }
    let boxes = (0..leaves.len())
        .map(|i| {
            let p: Vec<Vec3> = h.node(i).point_indices.iter().map(|&k| cloud.points()[k]).collect();
            pca_obb(&p)
        })
        .collect::<Result<Vec<_>>>()?;
    fill_boxes(&mut h, &boxes);
    relation_ground_truth(&mut h, RELATION_TOL)?;
    Ok(ShapeRecord {
        name: id.to_string(),
        category: Some(taxonomy.name(taxonomy.root()).to_string()),
        cloud,
        gt_hierarchy: h,
        gt_merges: vec![],
    })
}

fn collect_leaves(p: &PartJson, taxonomy: &Taxonomy, out: &mut Vec<(LabelId, Vec<usize>)>) -> Result<()> {
    let l = taxonomy.id(&p.label)?;
    if p.children.is_empty() {
        if p.points.is_empty() {
            return Err(Error::InvalidSegmentation(format!("leaf '{}' has no points", p.label)));
        }
        let mut pts = p.points.clone();
        pts.sort_unstable();
        pts.dedup();
        out.push((l, pts));
    } else {
        for c in &p.children {
            collect_leaves(c, taxonomy, out)?;
        }
    }
    Ok(())
}

fn build_internal(p: &PartJson, taxonomy: &Taxonomy, nodes: &mut Vec<PartNode>, next_leaf: &mut usize) -> Result<usize> {
    if p.children.is_empty() {
        *next_leaf += 1;
        return Ok(*next_leaf - 1);
    }
    let children = p
        .children
        .iter()
        .map(|c| build_internal(c, taxonomy, nodes, next_leaf))
        .collect::<Result<Vec<_>>>()?;
    let mut pts: Vec<usize> = children.iter().flat_map(|&c| nodes[c].point_indices.clone()).collect();
    pts.sort_unstable();
    pts.dedup();
    nodes.push(PartNode {
        id: nodes.len(),
        semantic: taxonomy.id(&p.label)?,
        bbox: None,
        point_indices: pts,
        feature: None,
        parent: None,
        children,
    });
    Ok(nodes.len() - 1)
}
