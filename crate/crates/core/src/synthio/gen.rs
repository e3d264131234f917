use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledCloud, Normalization, ShapeRecord};
use crate::geom::{Aabb, OrientedBox, Vec3};
use crate::structure::{build_hierarchy, relation_ground_truth, Hierarchy, LabelId, Segment, Taxonomy, TaxonomyTree};
use crate::{Error, Result};

/// Tolerance used to derive ground-truth relations of generated shapes.
pub const RELATION_TOL: f64 = 0.01;

/// Smallest number of points sampled on any part.
pub const MIN_PART_POINTS: usize = 24;

/// Toy furniture categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "toy-chair")]
    Chair,
    #[serde(rename = "toy-table")]
    Table,
    #[serde(rename = "toy-storage")]
    Storage,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Chair, Category::Table, Category::Storage];

    pub fn name(self) -> &'static str {
        match self {
            Category::Chair => "toy-chair",
            Category::Table => "toy-table",
            Category::Storage => "toy-storage",
        }
    }

    /// Label tree of the category.
    pub fn taxonomy(self) -> Taxonomy {
        let tree = match self {
            Category::Chair => TaxonomyTree::node(
                "chair",
                vec![
                    TaxonomyTree::node("base", vec![TaxonomyTree::leaf("leg")]),
                    TaxonomyTree::leaf("seat"),
                    TaxonomyTree::leaf("back"),
                ],
            ),
            Category::Table => TaxonomyTree::node(
                "table",
                vec![
                    TaxonomyTree::leaf("top"),
                    TaxonomyTree::node("base", vec![TaxonomyTree::leaf("leg")]),
                ],
            ),
            Category::Storage => TaxonomyTree::node(
                "storage",
                vec![
                    TaxonomyTree::node("frame", vec![TaxonomyTree::leaf("side"), TaxonomyTree::leaf("panel")]),
                    TaxonomyTree::leaf("shelf"),
                ],
            ),
        };
        Taxonomy::from_tree(&tree).expect("built-in taxonomy is valid")
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().trim_start_matches("toy-") == s)
            .ok_or_else(|| Error::Config(format!("unknown category '{s}' (expected toy-chair|toy-table|toy-storage)")))
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sampling and corruption settings of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Approximate number of points per shape.
    pub points: usize,
    /// Gaussian jitter, relative to the shape diagonal.
    pub jitter: f64,
    /// Per-point probability of being handed to a different, random part
    /// (stray segmentation errors).
    pub label_noise: f64,
    /// Probability that one part is split in two, producing one
    /// ground-truth merge.
    pub oversegment_prob: f64,
    /// Probability of a structural variant (extra legs, missing back).
    pub variant_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            points: 1200,
            jitter: 0.002,
            label_noise: 5e-4,
            oversegment_prob: 0.0,
            variant_prob: 0.0,
        }
    }
}

/// One part of a blueprint: its label and its box.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSpec {
    pub label: String,
    pub bbox: OrientedBox,
}

/// Part boxes of a shape before point sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Blueprint {
    pub category: Category,
    pub parts: Vec<PartSpec>,
}

impl Blueprint {
    /// Copy with every part of the given label removed.
    pub fn without_label(&self, label: &str) -> Blueprint {
        Blueprint {
            category: self.category,
            parts: self.parts.iter().filter(|p| p.label != label).cloned().collect(),
        }
    }
}

/// Dimensions of a chair: seat, legs and an optional back.
#[derive(Debug, Clone, PartialEq)]
pub struct ChairParams {
    pub width: f64,
    pub depth: f64,
    pub seat_height: f64,
    pub seat_thickness: f64,
    pub leg_thickness: f64,
    pub back_height: f64,
    pub back_thickness: f64,
    pub legs: usize,
    pub has_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableParams {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub top_thickness: f64,
    pub leg_thickness: f64,
    pub legs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageParams {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
    pub side_thickness: f64,
    pub panel_thickness: f64,
    pub shelf_thickness: f64,
    pub shelves: usize,
}

/// Parametric description of a toy shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Chair(ChairParams),
    Table(TableParams),
    Storage(StorageParams),
}

fn aabox(center: [f64; 3], extents: [f64; 3]) -> OrientedBox {
    OrientedBox::axis_aligned(Vec3::from_array(center), Vec3::from_array(extents)).expect("positive extents")
}

fn part(label: &str, bbox: OrientedBox) -> PartSpec {
    PartSpec {
        label: label.to_string(),
        bbox,
    }
}

/// Legs at the corners of a `width × depth` footprint, plus a middle pair
/// when six are requested. Leg centers spread wider along x than z.
fn legs(width: f64, depth: f64, thickness: f64, length: f64, count: usize) -> Vec<PartSpec> {
    let x = width / 2.0 - thickness / 2.0;
    let z = depth / 2.0 - thickness / 2.0;
    let mut xs = vec![-x, x];
    if count >= 6 {
        xs.insert(1, 0.0);
    }
    let mut out = Vec::new();
    for &zz in &[-z, z] {
        for &xx in &xs {
            out.push(part("leg", aabox([xx, length / 2.0, zz], [thickness, length, thickness])));
        }
    }
    out
}

impl ShapeParams {
    /// Draws dimensions for `category`. With probability `variant_prob` a
    /// structural variant is produced instead of the default layout.
    pub fn sample(category: Category, variant_prob: f64, rng: &mut impl Rng) -> ShapeParams {
        let variant = rng.random::<f64>() < variant_prob;
        match category {
            Category::Chair => {
                let kind = if variant { rng.random_range(0..2) } else { 2 };
                ShapeParams::Chair(ChairParams {
                    width: rng.random_range(0.55..0.7),
                    depth: rng.random_range(0.38..0.48),
                    seat_height: rng.random_range(0.4..0.5),
                    seat_thickness: rng.random_range(0.05..0.08),
                    leg_thickness: rng.random_range(0.04..0.07),
                    back_height: rng.random_range(0.4..0.6),
                    back_thickness: rng.random_range(0.04..0.06),
                    legs: if kind == 0 { 6 } else { 4 },
                    has_back: kind != 1,
                })
            }
            Category::Table => ShapeParams::Table(TableParams {
                width: rng.random_range(1.0..1.5),
                depth: rng.random_range(0.55..0.8),
                height: rng.random_range(0.65..0.8),
                top_thickness: rng.random_range(0.03..0.06),
                leg_thickness: rng.random_range(0.05..0.09),
                legs: if variant { 6 } else { 4 },
            }),
            Category::Storage => ShapeParams::Storage(StorageParams {
                width: rng.random_range(0.6..0.9),
                height: rng.random_range(1.1..1.6),
                depth: rng.random_range(0.3..0.45),
                side_thickness: rng.random_range(0.02..0.04),
                panel_thickness: rng.random_range(0.01..0.02),
                shelf_thickness: rng.random_range(0.02..0.035),
                shelves: rng.random_range(1..4),
            }),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            ShapeParams::Chair(_) => Category::Chair,
            ShapeParams::Table(_) => Category::Table,
            ShapeParams::Storage(_) => Category::Storage,
        }
    }

    /// Same structure with every continuous dimension scaled by an
    /// independent factor in `[1 - strength, 1 + strength]`.
    pub fn perturbed(&self, strength: f64, rng: &mut impl Rng) -> ShapeParams {
        let mut f = |v: f64| v * (1.0 + strength * (2.0 * rng.random::<f64>() - 1.0));
        match self {
            ShapeParams::Chair(c) => ShapeParams::Chair(ChairParams {
                width: f(c.width),
                depth: f(c.depth),
                seat_height: f(c.seat_height),
                seat_thickness: f(c.seat_thickness),
                leg_thickness: f(c.leg_thickness),
                back_height: f(c.back_height),
                back_thickness: f(c.back_thickness),
                ..c.clone()
            }),
            ShapeParams::Table(t) => ShapeParams::Table(TableParams {
                width: f(t.width),
                depth: f(t.depth),
                height: f(t.height),
                top_thickness: f(t.top_thickness),
                leg_thickness: f(t.leg_thickness),
                ..t.clone()
            }),
            ShapeParams::Storage(s) => ShapeParams::Storage(StorageParams {
                width: f(s.width),
                height: f(s.height),
                depth: f(s.depth),
                side_thickness: f(s.side_thickness),
                panel_thickness: f(s.panel_thickness),
                shelf_thickness: f(s.shelf_thickness),
                ..s.clone()
            }),
        }
    }

    /// Part boxes, listed in taxonomy order of their labels.
    pub fn blueprint(&self) -> Blueprint {
        let parts = match self {
            ShapeParams::Chair(c) => {
                let mut p = legs(c.width, c.depth, c.leg_thickness, c.seat_height, c.legs);
                p.push(part(
                    "seat",
                    aabox([0.0, c.seat_height + c.seat_thickness / 2.0, 0.0], [c.width, c.seat_thickness, c.depth]),
                ));
                if c.has_back {
                    p.push(part(
                        "back",
                        aabox(
                            [
                                0.0,
                                c.seat_height + c.seat_thickness + c.back_height / 2.0,
                                -c.depth / 2.0 + c.back_thickness / 2.0,
                            ],
                            [c.width, c.back_height, c.back_thickness],
                        ),
                    ));
                }
                p
            }
            ShapeParams::Table(t) => {
                let leg_len = t.height - t.top_thickness;
                let mut p = vec![part(
                    "top",
                    aabox([0.0, t.height - t.top_thickness / 2.0, 0.0], [t.width, t.top_thickness, t.depth]),
                )];
                p.extend(legs(t.width, t.depth, t.leg_thickness, leg_len, t.legs));
                p
            }
            ShapeParams::Storage(s) => {
                let sx = s.width / 2.0 - s.side_thickness / 2.0;
                let inner = s.width - 2.0 * s.side_thickness;
                let mut p = vec![
                    part("side", aabox([-sx, s.height / 2.0, 0.0], [s.side_thickness, s.height, s.depth])),
                    part("side", aabox([sx, s.height / 2.0, 0.0], [s.side_thickness, s.height, s.depth])),
                    part(
                        "panel",
                        aabox(
                            [0.0, s.height / 2.0, -s.depth / 2.0 + s.panel_thickness / 2.0],
                            [inner, s.height, s.panel_thickness],
                        ),
                    ),
                ];
                for i in 1..=s.shelves {
                    let y = s.height * i as f64 / (s.shelves + 1) as f64;
                    p.push(part(
                        "shelf",
                        aabox(
                            [0.0, y, s.panel_thickness / 2.0],
                            [inner, s.shelf_thickness, s.depth - s.panel_thickness],
                        ),
                    ));
                }
                p
            }
        };
        Blueprint {
            category: self.category(),
            parts,
        }
    }
}

/// Uniform sample on the surface of a box.
fn sample_surface(b: &OrientedBox, rng: &mut impl Rng) -> Vec3 {
    let s = b.scale;
    let areas = [s.y * s.z, s.x * s.z, s.x * s.y];
    let total: f64 = areas.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let mut axis = 2;
    for (k, a) in areas.iter().enumerate() {
        if r < *a {
            axis = k;
            break;
        }
        r -= a;
    }
    let side = if rng.random::<bool>() { 0.5 } else { -0.5 };
    let mut local = [0.0; 3];
    for (k, l) in local.iter_mut().enumerate() {
        *l = if k == axis {
            side * s[k]
        } else {
            (rng.random::<f64>() - 0.5) * s[k]
        };
    }
    b.to_world(Vec3::from_array(local))
}

fn surface_area(b: &OrientedBox) -> f64 {
    let s = b.scale;
    2.0 * (s.x * s.y + s.y * s.z + s.x * s.z)
}

/// Width of the boundary band around a cut, as a fraction of the cut axis.
/// Points inside the band go to either piece at random, so the two pieces
/// interpenetrate like the ragged boundaries of a real over-segmentation.
pub const SPLIT_BAND: f64 = 0.2;

/// Splits `members` (points of one part with box `b`) at a fraction of its
/// longest axis drawn from `[0.2, 0.35]`, measured from a random end, with
/// a ragged boundary band of width [`SPLIT_BAND`].
/// Returns the fragment, or `None` when either piece would be too small.
fn split_part(points: &[Vec3], members: &[usize], b: &OrientedBox, rng: &mut impl Rng) -> Option<Vec<usize>> {
    let s = b.scale;
    let k = (0..3).fold(0, |m, i| if s[i] > s[m] { i } else { m });
    let frac = rng.random_range(0.2..0.35);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut frag = Vec::new();
    for &i in members {
        let u = sign * b.to_local(points[i])[k] + s[k] / 2.0 - frac * s[k];
        let take = if u.abs() < SPLIT_BAND / 2.0 * s[k] {
            rng.random::<bool>()
        } else {
            u < 0.0
        };
        if take {
            frag.push(i);
        }
    }
    (frag.len() >= 8 && members.len() - frag.len() >= 8).then_some(frag)
}

/// Samples a labeled cloud and its ground truth from a blueprint.
pub fn realize(bp: &Blueprint, name: &str, config: &GenConfig, rng: &mut impl Rng) -> Result<ShapeRecord> {
    if bp.parts.is_empty() {
        return Err(Error::EmptyShape);
    }
    let taxonomy = bp.category.taxonomy();
    let labels: Vec<LabelId> = bp.parts.iter().map(|p| taxonomy.id(&p.label)).collect::<Result<_>>()?;
    let total_area: f64 = bp.parts.iter().map(|p| surface_area(&p.bbox)).sum();

    let mut points = Vec::new();
    let mut part_of = Vec::new();
    for (i, p) in bp.parts.iter().enumerate() {
        let n = ((config.points as f64 * surface_area(&p.bbox) / total_area).round() as usize).max(MIN_PART_POINTS);
        for _ in 0..n {
            points.push(sample_surface(&p.bbox, rng));
            part_of.push(i);
        }
    }
    let diag = Aabb::from_points(points.iter().copied()).unwrap().diagonal();
    if config.jitter > 0.0 {
        let normal = Normal::new(0.0, config.jitter * diag).map_err(|e| Error::Config(e.to_string()))?;
        for p in &mut points {
            *p += Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        }
    }
    let norm = Normalization::of_points(&points)?;
    for p in &mut points {
        *p = norm.apply(*p);
    }
    let boxes: Vec<OrientedBox> = bp.parts.iter().map(|p| p.bbox.rescaled(norm.scale, norm.shift)).collect();

    // ground truth: the true parts
    let n_parts = bp.parts.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_parts];
    for (i, &p) in part_of.iter().enumerate() {
        members[p].push(i);
    }
    let gt_segments: Vec<Segment> = members
        .iter()
        .zip(&labels)
        .map(|(m, &l)| Segment::new(m.clone(), l, points.len()))
        .collect::<Result<_>>()?;
    let mut gt = build_hierarchy(&points, &gt_segments, &taxonomy)?;
    fill_boxes(&mut gt, &boxes);
    relation_ground_truth(&mut gt, RELATION_TOL)?;

    // observed segmentation: optional split, then stray points
    let mut instances: Vec<u32> = part_of.iter().map(|&p| p as u32).collect();
    let mut inst_label: Vec<LabelId> = labels.clone();
    let mut gt_merges = Vec::new();
    if rng.random::<f64>() < config.oversegment_prob {
        let first = rng.random_range(0..n_parts);
        for off in 0..n_parts {
            let p = (first + off) % n_parts;
            if let Some(frag) = split_part(&points, &members[p], &boxes[p], rng) {
                let id = inst_label.len() as u32;
                for &i in &frag {
                    instances[i] = id;
                }
                inst_label.push(labels[p]);
                gt_merges.push((id as usize, p));
                break;
            }
        }
    }
    let k = inst_label.len();
    let mut sizes = vec![0usize; k];
    for &i in &instances {
        sizes[i as usize] += 1;
    }
    if config.label_noise > 0.0 && k > 1 {
        for inst in instances.iter_mut() {
            if rng.random::<f64>() < config.label_noise {
                let cur = *inst as usize;
                let mut other = rng.random_range(0..k - 1);
                if other >= cur {
                    other += 1;
                }
                if sizes[cur] > 8 {
                    sizes[cur] -= 1;
                    sizes[other] += 1;
                    *inst = other as u32;
                }
            }
        }
    }
    let semantics = instances.iter().map(|&i| inst_label[i as usize]).collect();
    let cloud = LabeledCloud::new(points, semantics, instances, true)?;
    Ok(ShapeRecord {
        name: name.to_string(),
        category: Some(bp.category.name().to_string()),
        cloud,
        gt_hierarchy: gt,
        gt_merges,
    })
}

/// Leaf `i` gets `leaf_boxes[i]`; internal nodes get the axis-aligned hull
/// of their children.
pub(crate) fn fill_boxes(h: &mut Hierarchy, leaf_boxes: &[OrientedBox]) {
    for id in h.postorder() {
        let b = if h.node(id).is_leaf() {
            leaf_boxes[id]
        } else {
            let bb = Aabb::from_points(
                h.children(id)
                    .iter()
                    .flat_map(|&c| h.node(c).bbox.expect("children filled first").corners()),
            )
            .unwrap();
            OrientedBox::from_aabb(&bb)
        };
        h.node_mut(id).bbox = Some(b);
    }
}

/// Generates one synthetic shape. The whole record is a function of
/// `(category, seed, config)`.
pub fn gen_shape(category: Category, seed: u64, config: &GenConfig) -> Result<ShapeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ShapeParams::sample(category, config.variant_prob, &mut rng);
    realize(&params.blueprint(), &format!("{}-{seed:05}", category.name()), config, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::RelationType;

    #[test]
    fn seed_repeatable() {
        let c = GenConfig {
            oversegment_prob: 0.5,
            ..GenConfig::default()
        };
        assert_eq!(gen_shape(Category::Chair, 7, &c).unwrap(), gen_shape(Category::Chair, 7, &c).unwrap());
        assert_ne!(gen_shape(Category::Chair, 7, &c).unwrap().cloud, gen_shape(Category::Chair, 8, &c).unwrap().cloud);
    }

    #[test]
    fn default_chair_layout() {
        let r = gen_shape(Category::Chair, 1, &GenConfig::default()).unwrap();
        let t = Category::Chair.taxonomy();
        let h = &r.gt_hierarchy;
        assert_eq!(h.leaf_count(), 6);
        let top: Vec<&str> = h.children(h.root()).iter().map(|&c| t.name(h.node(c).semantic)).collect();
        assert_eq!(top, vec!["base", "seat", "back"]);
        let base = h.children(h.root())[0];
        assert_eq!(h.children(base).len(), 4);
        assert!(r.gt_merges.is_empty());
        assert_eq!(r.cloud.instance_count(), 6);
        // legs spread wider along x than z, so x-mirrored pairs are reflective
        let refl = h
            .relations()
            .iter()
            .filter(|rel| rel.types.contains(RelationType::Reflective))
            .count();
        assert!(refl >= 2);
        assert!(h.relations().iter().any(|rel| rel.types.contains(RelationType::Adjacent)));
    }

    #[test]
    fn oversegmentation_adds_one_leaf_and_merge() {
        let c = GenConfig {
            oversegment_prob: 1.0,
            ..GenConfig::default()
        };
        for cat in Category::ALL {
            for seed in 0..10 {
                let r = gen_shape(cat, seed, &c).unwrap();
                assert_eq!(r.gt_merges.len(), 1);
                assert_eq!(r.cloud.instance_count(), r.gt_hierarchy.leaf_count() + 1);
                let (src, tgt) = r.gt_merges[0];
                assert_eq!(src, r.gt_hierarchy.leaf_count());
                assert!(tgt < src);
                let segs = r.cloud.segments();
                assert_eq!(segs[src].semantic, segs[tgt].semantic);
                assert!(segs[src].len() < segs[tgt].len());
            }
        }
    }

    #[test]
    fn leaves_partition_points_and_relations_consistent() {
        for cat in Category::ALL {
            let r = gen_shape(cat, 3, &GenConfig::default()).unwrap();
            let h = &r.gt_hierarchy;
            let mut all: Vec<usize> = h.leaves().iter().flat_map(|&l| h.node(l).point_indices.clone()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..r.cloud.len()).collect::<Vec<_>>());
            let mut again = h.clone();
            relation_ground_truth(&mut again, RELATION_TOL).unwrap();
            assert_eq!(again.relations(), h.relations());
            h.validate().unwrap();
            for l in h.leaves() {
                let b = h.bbox(l).unwrap();
                let inside = h.node(l).point_indices.iter().filter(|&&i| b.contains(r.cloud.points()[i], 0.01)).count();
                assert!(inside * 10 >= h.node(l).point_indices.len() * 9);
            }
        }
    }

    #[test]
    fn perturbation_keeps_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ShapeParams::sample(Category::Storage, 0.0, &mut rng);
        let q = p.perturbed(0.1, &mut rng);
        assert_eq!(p.blueprint().parts.len(), q.blueprint().parts.len());
        assert_ne!(p, q);
        let legless = ShapeParams::sample(Category::Chair, 0.0, &mut rng).blueprint().without_label("leg");
        assert_eq!(legless.parts.len(), 2);
    }

    #[test]
    fn category_names() {
        assert_eq!("toy-table".parse::<Category>().unwrap(), Category::Table);
        assert_eq!("chair".parse::<Category>().unwrap(), Category::Chair);
        assert!("sofa".parse::<Category>().is_err());
    }
}
