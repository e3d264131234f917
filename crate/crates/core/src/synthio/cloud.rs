use crate::geom::{Aabb, Vec3};
use crate::structure::{LabelId, Segment};
use crate::{Error, Result};

/// A point cloud with per-point semantic labels and instance ids, as
/// produced by an instance segmentation backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    points: Vec<Vec3>,
    semantics: Vec<LabelId>,
    instances: Vec<u32>,
    normalized: bool,
}

/// Uniform scale and shift mapping a cloud into its normalized frame:
/// `p -> p * scale + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub shift: Vec3,
}

impl Normalization {
    /// Maps the AABB of `points` to a unit-diagonal box centered at the
    /// origin.
    pub fn of_points(points: &[Vec3]) -> Result<Self> {
        let bb = Aabb::from_points(points.iter().copied()).ok_or(Error::EmptyPointSet)?;
        let d = bb.diagonal();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric("cannot normalize a cloud with zero extent".into()));
        }
        let scale = 1.0 / d;
        Ok(Normalization {
            scale,
            shift: -(bb.center() * scale),
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.shift
    }
}

impl LabeledCloud {
    /// The three arrays must share a nonzero length and every point must be
    /// finite. Instance ids must be dense: every id below the maximum is
    /// used.
    pub fn new(points: Vec<Vec3>, semantics: Vec<LabelId>, instances: Vec<u32>, normalized: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if semantics.len() != points.len() || instances.len() != points.len() {
            return Err(Error::InvalidSegmentation(format!(
                "{} points, {} semantic labels, {} instance ids",
                points.len(),
                semantics.len(),
                instances.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("point {i} is not finite")));
        }
        let k = *instances.iter().max().unwrap() as usize + 1;
        let mut used = vec![false; k];
        for &i in &instances {
            used[i as usize] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidSegmentation(format!("instance id {missing} has no points")));
        }
        Ok(LabeledCloud {
            points,
            semantics,
            instances,
            normalized,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn semantics(&self) -> &[LabelId] {
        &self.semantics
    }

    pub fn instances(&self) -> &[u32] {
        &self.instances
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn instance_count(&self) -> usize {
        *self.instances.iter().max().unwrap() as usize + 1
    }

    /// Rescales into the unit-diagonal frame centered at the origin and sets
    /// the flag. A cloud already flagged is left untouched. Returns the
    /// transform applied (identity when nothing changed).
    pub fn normalize(&mut self) -> Result<Normalization> {
        if self.normalized {
            return Ok(Normalization {
                scale: 1.0,
                shift: Vec3::ZERO,
            });
        }
        let n = Normalization::of_points(&self.points)?;
        for p in &mut self.points {
            *p = n.apply(*p);
        }
        self.normalized = true;
        Ok(n)
    }

    /// One segment per instance id, in id order. A segment's semantic label
    /// is the most frequent label among its points (ties to the lower id).
    pub fn segments(&self) -> Vec<Segment> {
        let k = self.instance_count();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &inst) in self.instances.iter().enumerate() {
            members[inst as usize].push(i);
        }
        members
            .into_iter()
            .map(|idx| {
                let mut counts: Vec<(LabelId, usize)> = Vec::new();
                for &i in &idx {
                    let l = self.semantics[i];
                    match counts.iter_mut().find(|c| c.0 == l) {
                        Some(c) => c.1 += 1,
                        None => counts.push((l, 1)),
                    }
                }
                counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                Segment::new(idx, counts[0].0, self.points.len()).expect("instance members are valid")
            })
            .collect()
    }
}
