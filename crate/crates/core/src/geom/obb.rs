use nalgebra::{Matrix3, SymmetricEigen};

use super::{Aabb, UnitQuaternion, Vec3};
use crate::{Error, Result};

/// Smallest extent a fitted box may have along any axis.
pub const EXTENT_FLOOR: f64 = 1e-6;

/// Oriented bounding box: center, full extents along the local axes, and the
/// rotation taking local axes to world axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub translation: Vec3,
    pub scale: Vec3,
    pub rotation: UnitQuaternion,
}

const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

impl OrientedBox {
    pub fn new(translation: Vec3, scale: Vec3, rotation: UnitQuaternion) -> Result<Self> {
        if !translation.is_finite() {
            return Err(Error::InvalidBox(format!("non-finite center {translation:?}")));
        }
        if !scale.is_finite() || scale.x <= 0.0 || scale.y <= 0.0 || scale.z <= 0.0 {
            return Err(Error::InvalidBox(format!("extents must be positive, got {scale:?}")));
        }
        Ok(OrientedBox {
            translation,
            scale,
            rotation,
        })
    }

    pub fn axis_aligned(center: Vec3, extents: Vec3) -> Result<Self> {
        Self::new(center, extents, UnitQuaternion::IDENTITY)
    }

    pub fn from_aabb(bb: &Aabb) -> Self {
        let e = bb.extents();
        OrientedBox {
            translation: bb.center(),
            scale: Vec3::new(
                e.x.max(EXTENT_FLOOR),
                e.y.max(EXTENT_FLOOR),
                e.z.max(EXTENT_FLOOR),
            ),
            rotation: UnitQuaternion::IDENTITY,
        }
    }

    pub fn half_extents(&self) -> Vec3 {
        self.scale * 0.5
    }

    pub fn volume(&self) -> f64 {
        self.scale.x * self.scale.y * self.scale.z
    }

    pub fn axes(&self) -> [Vec3; 3] {
        self.rotation.axes()
    }

    pub fn to_local(&self, p: Vec3) -> Vec3 {
        self.rotation.inverse_rotate(p - self.translation)
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.rotation.rotate(local) + self.translation
    }

    pub fn contains(&self, p: Vec3, eps: f64) -> bool {
        let l = self.to_local(p).abs();
        let h = self.half_extents();
        l.x <= h.x + eps && l.y <= h.y + eps && l.z <= h.z + eps
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        CORNER_SIGNS.map(|s| self.to_world(Vec3::new(s[0] * h.x, s[1] * h.y, s[2] * h.z)))
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.corners()).expect("eight corners")
    }

    /// Applies the rigid motion `p -> rotation * p + translation`.
    pub fn transformed(&self, rotation: &UnitQuaternion, translation: Vec3) -> Self {
        OrientedBox {
            translation: rotation.rotate(self.translation) + translation,
            scale: self.scale,
            rotation: rotation.compose(&self.rotation),
        }
    }

    /// Uniform scaling about the origin followed by a shift.
    pub fn rescaled(&self, factor: f64, shift: Vec3) -> Self {
        OrientedBox {
            translation: self.translation * factor + shift,
            scale: self.scale * factor,
            rotation: self.rotation,
        }
    }
}

/// Sign convention for principal axes: nonnegative dot with (1,1,1), ties
/// broken toward the first nonzero component being positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    let d = v.dot(Vec3::ONE);
    if d > 1e-12 {
        return v;
    }
    if d < -1e-12 {
        return -v;
    }
    for i in 0..3 {
        if v[i].abs() > 1e-12 {
            return if v[i] > 0.0 { v } else { -v };
        }
    }
    v
}

/// Fits a box to `points` along the principal components of their covariance.
///
/// Axes are ordered by descending eigenvalue; the first two follow the sign
/// convention above and the third completes a right-handed frame. The box
/// spans the projection range on each axis (floored at [`EXTENT_FLOOR`]), so
/// its center is the mid-range point, which equals the centroid for
/// symmetric point sets.
pub fn pca_obb(points: &[Vec3]) -> Result<OrientedBox> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidBox("non-finite input point".into()));
    }
    let c = super::centroid(points)?;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = *p - c;
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    cov /= points.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    // stable: equal eigenvalues keep nalgebra's column order
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let col = |i: usize| {
        let v = eig.eigenvectors.column(order[i]);
        Vec3::new(v[0], v[1], v[2]).normalized()
    };
    let e0 = canonical_sign(col(0));
    let mut e1 = canonical_sign(col(1));
    // re-orthogonalize against numerical drift in near-degenerate spectra
    e1 = (e1 - e0 * e0.dot(e1)).normalized();
    let e2 = e0.cross(e1).normalized();
    let axes = [e0, e1, e2];

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        let d = *p - c;
        for k in 0..3 {
            let t = d.dot(axes[k]);
            lo[k] = lo[k].min(t);
            hi[k] = hi[k].max(t);
        }
    }
    let mut center = c;
    let mut ext = [0.0; 3];
    for k in 0..3 {
        center += axes[k] * (0.5 * (lo[k] + hi[k]));
        ext[k] = (hi[k] - lo[k]).max(EXTENT_FLOOR);
    }
    OrientedBox::new(
        center,
        Vec3::from_array(ext),
        UnitQuaternion::from_axes(axes),
    )
}
