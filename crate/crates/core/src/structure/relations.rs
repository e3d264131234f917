use std::fmt;

use super::{Hierarchy, Relation};
use crate::geom::{separation_gap, OrientedBox, Vec3};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    Translational,
    Rotational,
    Reflective,
    Adjacent,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::Translational,
        RelationType::Rotational,
        RelationType::Reflective,
        RelationType::Adjacent,
    ];

    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Translational => "translational",
            RelationType::Rotational => "rotational",
            RelationType::Reflective => "reflective",
            RelationType::Adjacent => "adjacent",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of relation types carried by one sibling pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RelationSet(u8);

impl RelationSet {
    pub fn empty() -> Self {
        RelationSet(0)
    }

    pub fn from_types(types: impl IntoIterator<Item = RelationType>) -> Self {
        let mut s = Self::empty();
        for t in types {
            s.insert(t);
        }
        s
    }

    pub fn insert(&mut self, t: RelationType) {
        self.0 |= 1 << t.index();
    }

    pub fn contains(self, t: RelationType) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn union(self, o: RelationSet) -> RelationSet {
        RelationSet(self.0 | o.0)
    }

    pub fn intersection(self, o: RelationSet) -> RelationSet {
        RelationSet(self.0 & o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = RelationType> {
        RelationType::ALL.into_iter().filter(move |t| self.contains(*t))
    }

    /// 0/1 indicator per type, in [`RelationType::ALL`] order.
    pub fn indicators(self) -> [f64; RelationType::COUNT] {
        RelationType::ALL.map(|t| if self.contains(t) { 1.0 } else { 0.0 })
    }
}

/// Labels every sibling pair with the relation types its boxes satisfy.
///
/// Within a sibling group with centroid `m`:
/// - adjacent: the separating-axis gap between the boxes is below `tol`
///   (touching or overlapping boxes qualify);
/// - reflective: mirroring one center through the plane through `m` normal
///   to the world axis of largest sibling spread lands within `tol` of the
///   other center, and the extents agree within `tol`;
/// - translational: the boxes are congruent (extents within `tol`,
///   orientations within `tol` radians) and their center offset, up to
///   sign, is shared by another congruent pair of the group;
/// - rotational: in a group of at least three, congruent boxes whose
///   centers lie at equal nonzero distance from `m`.
pub fn relation_ground_truth(h: &mut Hierarchy, tol: f64) -> Result<()> {
    let mut relations = Vec::new();
    for parent in h.subsets() {
        let kids = h.children(parent).to_vec();
        if kids.len() < 2 {
            continue;
        }
        let boxes: Vec<OrientedBox> = kids
            .iter()
            .map(|&k| h.bbox(k).copied())
            .collect::<Result<_>>()?;
        for (a, b, types) in subset_relations(&boxes, tol) {
            relations.push(Relation {
                a: kids[a],
                b: kids[b],
                types,
            });
        }
    }
    h.set_relations(relations)
}

fn congruent(a: &OrientedBox, b: &OrientedBox, tol: f64) -> bool {
    (a.scale - b.scale).abs().max_elem() < tol && a.rotation.angle_to(&b.rotation) < tol
}

/// Relation sets for all pairs `(i, j)`, `i < j`, of one sibling group.
fn subset_relations(boxes: &[OrientedBox], tol: f64) -> Vec<(usize, usize, RelationSet)> {
    let n = boxes.len();
    let centers: Vec<Vec3> = boxes.iter().map(|b| b.translation).collect();
    let mut m = Vec3::ZERO;
    for &c in &centers {
        m += c;
    }
    m = m / n as f64;

    let mut var = [0.0f64; 3];
    for c in &centers {
        let d = *c - m;
        for k in 0..3 {
            var[k] += d[k] * d[k];
        }
    }
    let mut axis = 0;
    for k in 1..3 {
        if var[k] > var[axis] + 1e-12 {
            axis = k;
        }
    }
    let normal = [Vec3::X, Vec3::Y, Vec3::Z][axis];
    let reflect = |p: Vec3| p - normal * (2.0 * (p - m).dot(normal));

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    let cong: Vec<bool> = pairs
        .iter()
        .map(|&(i, j)| congruent(&boxes[i], &boxes[j], tol))
        .collect();
    let offsets: Vec<Vec3> = pairs.iter().map(|&(i, j)| centers[j] - centers[i]).collect();

    let mut out = Vec::new();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let mut s = RelationSet::empty();
        if separation_gap(&boxes[i], &boxes[j]) < tol {
            s.insert(RelationType::Adjacent);
        }
        if reflect(centers[i]).dist(centers[j]) < tol
            && centers[i].dist(centers[j]) >= tol
            && (boxes[i].scale - boxes[j].scale).abs().max_elem() < tol
        {
            s.insert(RelationType::Reflective);
        }
        if cong[p] {
            let d = offsets[p];
            let shared = pairs.iter().enumerate().any(|(q, _)| {
                q != p
                    && cong[q]
                    && ((offsets[q] - d).norm() < tol || (offsets[q] + d).norm() < tol)
            });
            if shared {
                s.insert(RelationType::Translational);
            }
            if n >= 3 {
                let ri = centers[i].dist(m);
                let rj = centers[j].dist(m);
                if (ri - rj).abs() < tol && ri > tol {
                    s.insert(RelationType::Rotational);
                }
            }
        }
        if !s.is_empty() {
            out.push((i, j, s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::UnitQuaternion;

    fn aa(c: Vec3, s: Vec3) -> OrientedBox {
        OrientedBox::axis_aligned(c, s).unwrap()
    }

    #[test]
    fn four_legs_on_a_rectangle() {
        // legs at x = ±0.3, z = ±0.2: x is the spread axis
        let s = Vec3::new(0.05, 0.4, 0.05);
        let legs = [
            aa(Vec3::new(-0.3, 0.0, -0.2), s),
            aa(Vec3::new(0.3, 0.0, -0.2), s),
            aa(Vec3::new(-0.3, 0.0, 0.2), s),
            aa(Vec3::new(0.3, 0.0, 0.2), s),
        ];
        let rel = subset_relations(&legs, 0.01);
        let get = |i, j| {
            rel.iter()
                .find(|r| r.0 == i && r.1 == j)
                .map(|r| r.2)
                .unwrap_or_default()
        };
        use RelationType::*;
        // mirrored across the x plane
        assert_eq!(get(0, 1), RelationSet::from_types([Reflective, Translational, Rotational]));
        assert_eq!(get(2, 3), RelationSet::from_types([Reflective, Translational, Rotational]));
        // front/back: same offset shared by two pairs
        assert_eq!(get(0, 2), RelationSet::from_types([Translational, Rotational]));
        assert_eq!(get(1, 3), RelationSet::from_types([Translational, Rotational]));
        // diagonals: only equal radii
        assert_eq!(get(0, 3), RelationSet::from_types([Rotational]));
        assert_eq!(get(1, 2), RelationSet::from_types([Rotational]));
        assert!(rel.iter().all(|r| !r.2.contains(Adjacent)));
    }

    #[test]
    fn touching_faces_are_adjacent() {
        let a = aa(Vec3::ZERO, Vec3::ONE);
        let b = aa(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 1.0));
        let rel = subset_relations(&[a, b], 0.01);
        assert_eq!(rel.len(), 1);
        assert!(rel[0].2.contains(RelationType::Adjacent));
    }

    #[test]
    fn rotated_copies_are_not_congruent() {
        let a = aa(Vec3::ZERO, Vec3::new(1.0, 0.2, 0.2));
        let q = UnitQuaternion::from_axis_angle(Vec3::Y, 0.5);
        let b = OrientedBox::new(Vec3::new(5.0, 0.0, 0.0), a.scale, q).unwrap();
        assert!(!congruent(&a, &b, 0.01));
    }

    #[test]
    fn set_ops() {
        let s = RelationSet::from_types([RelationType::Adjacent, RelationType::Rotational]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.indicators(), [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![RelationType::Rotational, RelationType::Adjacent]);
    }
}
