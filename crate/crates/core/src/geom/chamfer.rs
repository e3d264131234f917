use super::Vec3;
use crate::{Error, Result};

/// Static kd-tree over a point set for exact nearest-neighbour queries.
pub struct PointIndex<'a> {
    points: &'a [Vec3],
    // implicit tree: order[lo..hi] is a subtree, split at the median index
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 8;

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build(points, &mut order, 0);
        PointIndex { points, order }
    }

    /// Squared distance from `q` to the nearest indexed point.
    pub fn nearest_dist_sq(&self, q: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(q, 0, self.order.len(), 0, &mut best);
        best
    }

    fn search(&self, q: Vec3, lo: usize, hi: usize, depth: usize, best: &mut f64) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = q.dist_sq(self.points[i as usize]);
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let axis = depth % 3;
        let mid = lo + (hi - lo) / 2;
        let pivot = self.points[self.order[mid] as usize];
        let d = q.dist_sq(pivot);
        if d < *best {
            *best = d;
        }
        let diff = q[axis] - pivot[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if diff * diff < *best {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [u32], depth: usize) {
    if order.len() <= LEAF_SIZE {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}

fn directed(from: &[Vec3], to: &PointIndex) -> f64 {
    let mut sum = 0.0;
    for &p in from {
        sum += to.nearest_dist_sq(p);
    }
    sum / from.len() as f64
}

/// Squared chamfer distance: mean squared nearest-neighbour distance from `a`
/// to `b` plus the same from `b` to `a`.
pub fn chamfer_sq(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let ia = PointIndex::new(a);
    let ib = PointIndex::new(b);
    Ok(directed(a, &ib) + directed(b, &ia))
}

/// Quadratic reference implementation of [`chamfer_sq`].
pub fn chamfer_sq_brute_force(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let one = |from: &[Vec3], to: &[Vec3]| {
        let mut sum = 0.0;
        for &p in from {
            let mut best = f64::INFINITY;
            for &q in to {
                let d = p.dist_sq(q);
                if d < best {
                    best = d;
                }
            }
            sum += best;
        }
        sum / from.len() as f64
    };
    Ok(one(a, b) + one(b, a))
}
