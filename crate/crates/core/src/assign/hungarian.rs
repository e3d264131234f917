use super::Assignment;
use crate::{Error, Result};

/// Sentinel cost for forbidden pairs. Pairs whose cost reaches `LARGE / 2`
/// are reported as unmatched.
pub const LARGE: f64 = 1e9;

/// Dense row-major cost matrix; rows are predictions, columns ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        CostMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transposed(&self) -> CostMatrix {
        let mut t = CostMatrix::filled(self.cols, self.rows, 0.0);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

/// Minimum-cost assignment of `min(rows, cols)` pairs (shortest augmenting
/// path form of the Hungarian method, O(n²m)). Pairs at or above
/// `LARGE / 2` are moved to the unmatched lists; `total_cost` sums the
/// reported pairs only.
pub fn hungarian(cost: &CostMatrix) -> Result<Assignment> {
    for r in 0..cost.rows {
        for c in 0..cost.cols {
            if !cost.get(r, c).is_finite() {
                return Err(Error::InvalidCost { row: r, col: c });
            }
        }
    }
    let row_to_col = if cost.rows <= cost.cols {
        solve(cost)
    } else {
        let col_to_row = solve(&cost.transposed());
        let mut r2c = vec![None; cost.rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                r2c[r] = Some(c);
            }
        }
        r2c
    };

    let mut out = Assignment::default();
    let mut col_used = vec![false; cost.cols];
    for (r, c) in row_to_col.into_iter().enumerate() {
        match c {
            Some(c) if cost.get(r, c) < LARGE / 2.0 => {
                out.pairs.push((r, c));
                out.total_cost += cost.get(r, c);
                col_used[c] = true;
            }
            _ => out.unmatched_pred.push(r),
        }
    }
    out.unmatched_gt = (0..cost.cols).filter(|&c| !col_used[c]).collect();
    Ok(out)
}

/// Requires rows <= cols. Returns the column assigned to each row.
fn solve(cost: &CostMatrix) -> Vec<Option<usize>> {
    let n = cost.rows;
    let m = cost.cols;
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based potentials and matching as in the classic formulation;
    // p[j] is the row matched to column j (0 = free)
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] > 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}
