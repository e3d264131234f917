use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabeledCloud, ShapeRecord};
use crate::geom::{OrientedBox, UnitQuaternion, Vec3};
use crate::structure::{Hierarchy, LabelId, NodeId, PartNode, Relation, RelationSet, RelationType, Taxonomy};
use crate::{Error, Result};

/// Segmented point cloud as stored on disk, with optional ground-truth
/// merges.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFile {
    pub name: String,
    pub category: Option<String>,
    pub cloud: LabeledCloud,
    pub gt_merges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default)]
    normalized: bool,
    points: Vec<[f64; 3]>,
    semantics: Vec<u32>,
    instances: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    gt_merges: Vec<[usize; 2]>,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a shape document. `context` names the source in errors.
pub fn shape_from_str(text: &str, context: &str) -> Result<ShapeFile> {
    let j: ShapeJson = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
    let points = j.points.iter().map(|p| Vec3::from_array(*p)).collect();
    let semantics = j.semantics.iter().map(|&s| LabelId(s)).collect();
    let cloud = LabeledCloud::new(points, semantics, j.instances, j.normalized)
        .map_err(|e| Error::parse(context, e))?;
    let k = cloud.instance_count();
    for m in &j.gt_merges {
        if m[0] >= k || m[1] >= k {
            return Err(Error::parse(
                context,
                format!("field `gt_merges`: merge {:?} references a missing instance", m),
            ));
        }
    }
    Ok(ShapeFile {
        name: j.name.unwrap_or_default(),
        category: j.category,
        cloud,
        gt_merges: j.gt_merges.iter().map(|m| (m[0], m[1])).collect(),
    })
}

pub fn shape_to_string(s: &ShapeFile) -> String {
    let j = ShapeJson {
        name: (!s.name.is_empty()).then(|| s.name.clone()),
        category: s.category.clone(),
        normalized: s.cloud.is_normalized(),
        points: s.cloud.points().iter().map(|p| p.to_array()).collect(),
        semantics: s.cloud.semantics().iter().map(|l| l.0).collect(),
        instances: s.cloud.instances().to_vec(),
        gt_merges: s.gt_merges.iter().map(|&(a, b)| [a, b]).collect(),
    };
    serde_json::to_string(&j).expect("shape serializes")
}

pub fn read_shape(path: &Path) -> Result<ShapeFile> {
    let mut s = shape_from_str(&read_text(path)?, &path.display().to_string())?;
    if s.name.is_empty() {
        s.name = shape_stem(path);
    }
    Ok(s)
}

pub fn write_shape(path: &Path, s: &ShapeFile) -> Result<()> {
    write_text(path, &shape_to_string(s))
}

/// File name without the `.shape.json` (or plain `.json`) suffix.
pub fn shape_stem(path: &Path) -> String {
    let f = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".shape.json", ".hierarchy.json", ".json"] {
        if let Some(s) = f.strip_suffix(suffix) {
            return s.to_string();
        }
    }
    f
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxJson {
    t: [f64; 3],
    s: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationJson {
    a: NodeId,
    b: NodeId,
    types: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeJson {
    id: NodeId,
    label: String,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bbox: Option<BoxJson>,
    points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relations: Vec<RelationJson>,
}

fn box_to_json(b: &OrientedBox) -> BoxJson {
    BoxJson {
        t: b.translation.to_array(),
        s: b.scale.to_array(),
        q: b.rotation.to_array(),
    }
}

fn box_from_json(b: &BoxJson, ctx: &str, id: NodeId) -> Result<OrientedBox> {
    let q = UnitQuaternion::new(b.q[0], b.q[1], b.q[2], b.q[3])
        .ok_or_else(|| Error::parse(ctx, format!("node {id}: field `box.q` is not a rotation")))?;
    OrientedBox::new(Vec3::from_array(b.t), Vec3::from_array(b.s), q)
        .map_err(|e| Error::parse(ctx, format!("node {id}: field `box`: {e}")))
}

fn node_to_json(h: &Hierarchy, id: NodeId, taxonomy: &Taxonomy) -> NodeJson {
    let n = h.node(id);
    NodeJson {
        id,
        label: taxonomy.name(n.semantic).to_string(),
        bbox: n.bbox.as_ref().map(box_to_json),
        points: n.point_indices.clone(),
        children: n.children.iter().map(|&c| node_to_json(h, c, taxonomy)).collect(),
        relations: h
            .subset_relations(id)
            .iter()
            .map(|r| RelationJson {
                a: r.a,
                b: r.b,
                types: r.types.iter().map(|t| t.name().to_string()).collect(),
            })
            .collect(),
    }
}

/// Nested JSON form of a hierarchy; labels are written by name.
pub fn hierarchy_to_string(h: &Hierarchy, taxonomy: &Taxonomy) -> String {
    serde_json::to_string(&node_to_json(h, h.root(), taxonomy)).expect("hierarchy serializes")
}

pub fn hierarchy_from_str(text: &str, taxonomy: &Taxonomy, context: &str) -> Result<Hierarchy> {
    let root: NodeJson = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
    let mut slots: Vec<Option<PartNode>> = Vec::new();
    let mut relations = Vec::new();
    let mut stack = vec![&root];
    while let Some(n) = stack.pop() {
        let semantic = taxonomy.id(&n.label)?;
        let bbox = n.bbox.as_ref().map(|b| box_from_json(b, context, n.id)).transpose()?;
        let mut points = n.points.clone();
        points.sort_unstable();
        if slots.len() <= n.id {
            slots.resize(n.id + 1, None);
        }
        if slots[n.id].is_some() {
            return Err(Error::parse(context, format!("field `id`: node id {} used twice", n.id)));
        }
        slots[n.id] = Some(PartNode {
            id: n.id,
            semantic,
            bbox,
            point_indices: points,
            feature: None,
            parent: None,
            children: n.children.iter().map(|c| c.id).collect(),
        });
        for r in &n.relations {
            let types = r
                .types
                .iter()
                .map(|t| {
                    RelationType::from_name(t)
                        .ok_or_else(|| Error::parse(context, format!("field `types`: unknown relation type '{t}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            relations.push(Relation {
                a: r.a,
                b: r.b,
                types: RelationSet::from_types(types),
            });
        }
        stack.extend(n.children.iter().rev());
    }
    let nodes = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::parse(context, format!("field `id`: node id {i} missing"))))
        .collect::<Result<Vec<_>>>()?;
    let mut h = Hierarchy::from_nodes(nodes, root.id).map_err(|e| Error::parse(context, e))?;
    h.set_relations(relations).map_err(|e| Error::parse(context, e))?;
    Ok(h)
}

pub fn read_hierarchy(path: &Path, taxonomy: &Taxonomy) -> Result<Hierarchy> {
    hierarchy_from_str(&read_text(path)?, taxonomy, &path.display().to_string())
}

pub fn write_hierarchy(path: &Path, h: &Hierarchy, taxonomy: &Taxonomy) -> Result<()> {
    write_text(path, &hierarchy_to_string(h, taxonomy))
}

/// Paths of a record's two files inside `dir`.
pub fn record_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.shape.json")),
        dir.join(format!("{name}.hierarchy.json")),
    )
}

/// Writes `<name>.shape.json` and `<name>.hierarchy.json` into `dir`.
pub fn save_shape(dir: &Path, r: &ShapeRecord, taxonomy: &Taxonomy) -> Result<()> {
    let (sp, hp) = record_paths(dir, &r.name);
    write_shape(
        &sp,
        &ShapeFile {
            name: r.name.clone(),
            category: r.category.clone(),
            cloud: r.cloud.clone(),
            gt_merges: r.gt_merges.clone(),
        },
    )?;
    write_hierarchy(&hp, &r.gt_hierarchy, taxonomy)
}

/// Reads a shape file and the hierarchy file next to it.
pub fn load_shape(shape_path: &Path, taxonomy: &Taxonomy) -> Result<ShapeRecord> {
    let s = read_shape(shape_path)?;
    let dir = shape_path.parent().unwrap_or(Path::new("."));
    let (_, hp) = record_paths(dir, &shape_stem(shape_path));
    let h = read_hierarchy(&hp, taxonomy)?;
    Ok(ShapeRecord {
        name: s.name,
        category: s.category,
        cloud: s.cloud,
        gt_hierarchy: h,
        gt_merges: s.gt_merges,
    })
}
