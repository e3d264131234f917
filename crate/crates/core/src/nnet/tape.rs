//! Reverse-mode differentiation over rank-2 tensors.
//!
//! Every operation appends a node holding its value and the ids of its
//! inputs, so node order is a topological order; [`Tape::backward`] sweeps
//! it once in reverse.

use super::Tensor;

/// Handle to a node of a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probability clamp applied before logarithms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Log(Var),
    Abs(Var),
    MaxRows(Var, Vec<usize>),
    SegmentMax(Var, Vec<Option<usize>>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    QuatToMat(Var),
    ProjectedQuantiles(Var, Vec<[f64; 3]>),
    Bce(Var, Vec<f64>),
    Focal(Var, Vec<f64>, f64, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of a computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the variable does not influence the differentiated value.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros shaped like `like` when it has none.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`; column `k` is the
/// image of the `k`-th basis vector.
fn quat_matrix(u: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = u;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Partial derivatives of [`quat_matrix`] with respect to `(w, x, y, z)`.
fn quat_matrix_grad(u: [f64; 4], g: &[[f64; 3]; 3]) -> [f64; 4] {
    let [w, x, y, z] = u;
    // d R / d component, each a 3x3 matrix
    let dw = [[0.0, -2.0 * z, 2.0 * y], [2.0 * z, 0.0, -2.0 * x], [-2.0 * y, 2.0 * x, 0.0]];
    let dx = [[0.0, 2.0 * y, 2.0 * z], [2.0 * y, -4.0 * x, -2.0 * w], [2.0 * z, 2.0 * w, -4.0 * x]];
    let dy = [[-4.0 * y, 2.0 * x, 2.0 * w], [2.0 * x, 0.0, 2.0 * z], [-2.0 * w, 2.0 * z, -4.0 * y]];
    let dz = [[-4.0 * z, -2.0 * w, 2.0 * x], [2.0 * w, -4.0 * z, 2.0 * y], [2.0 * x, 2.0 * y, 0.0]];
    let dot = |d: &[[f64; 3]; 3]| {
        let mut s = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                s += d[r][c] * g[r][c];
            }
        }
        s
    };
    [dot(&dw), dot(&dx), dot(&dy), dot(&dz)]
}

/// Quaternion norm below which the rotation falls back to identity.
pub const QUAT_NORM_FLOOR: f64 = 1e-8;

/// Nearest-rank positions of the `q` and `1 - q` quantiles of `n` samples.
pub fn quantile_ranks(n: usize, q: f64) -> (usize, usize) {
    let last = (n - 1) as f64;
    let lo = (q * last).floor() as usize;
    let hi = ((1.0 - q) * last).ceil() as usize;
    (lo.min(n - 1), hi.min(n - 1).max(lo))
}

/// Focal loss of one probability, with its derivative.
pub(crate) fn focal_with_grad(p: f64, label: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let clamped = pc != p;
    let (pt, at, sign) = if label > 0.5 {
        (pc, alpha, 1.0)
    } else {
        (1.0 - pc, 1.0 - alpha, -1.0)
    };
    let one_m = 1.0 - pt;
    let loss = -at * one_m.powf(gamma) * pt.ln();
    let mut d = -at * one_m.powf(gamma) / pt;
    if gamma != 0.0 {
        d += at * gamma * one_m.powf(gamma - 1.0) * pt.ln();
    }
    (loss, if clamped { 0.0 } else { d * sign })
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar");
        t.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    fn row_broadcast(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, rv) = (self.value(a), self.value(row));
        assert!(rv.rows() == 1 && rv.cols() == av.cols(), "row broadcast shape mismatch");
        let n = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, rv.data()[i % n]))
            .collect();
        Tensor::new(vec![av.rows(), n], data)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.row_broadcast(a, row, |x, y| x + y);
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.row_broadcast(a, row, |x, y| x * y);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    /// Natural log of values clamped below at [`PROB_EPS`].
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(PROB_EPS).ln());
        self.push(v, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    /// Column-wise maximum over rows: `m × n -> 1 × n`. Ties go to the
    /// first row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert!(av.rows() > 0, "max over zero rows");
        let n = av.cols();
        let mut arg = vec![0usize; n];
        let mut best = av.row_slice(0).to_vec();
        for r in 1..av.rows() {
            for (c, &x) in av.row_slice(r).iter().enumerate() {
                if x > best[c] {
                    best[c] = x;
                    arg[c] = r;
                }
            }
        }
        self.push(Tensor::new(vec![1, n], best), Op::MaxRows(a, arg))
    }

    /// Per-segment column-wise maximum: row `r` of `a` belongs to segment
    /// `segment[r]`. Empty segments yield zero rows.
    pub fn segment_max(&mut self, a: Var, segment: &[usize], segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(segment.len(), av.rows(), "one segment id per row");
        let n = av.cols();
        let mut out = vec![0.0; segments * n];
        let mut arg: Vec<Option<usize>> = vec![None; segments * n];
        for (r, &s) in segment.iter().enumerate() {
            for (c, &x) in av.row_slice(r).iter().enumerate() {
                let k = s * n + c;
                if arg[k].is_none() || x > out[k] {
                    out[k] = x;
                    arg[k] = Some(r);
                }
            }
        }
        self.push(Tensor::new(vec![segments, n], out), Op::SegmentMax(a, arg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        assert!(parts.iter().all(|&p| self.value(p).rows() == rows), "concat_cols row mismatch");
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        self.push(Tensor::new(vec![rows, total], data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        assert!(parts.iter().all(|&p| self.value(p).cols() == cols), "concat_rows column mismatch");
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        self.push(Tensor::new(vec![rows, cols], data), Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start .. start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice out of range");
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        self.push(Tensor::new(vec![av.rows(), len], data), Op::SliceCols(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * av.cols());
        for &i in idx {
            data.extend_from_slice(av.row_slice(i));
        }
        self.push(Tensor::new(vec![idx.len(), av.cols()], data), Op::GatherRows(a, idx.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// `1 × 4` quaternion `(w, x, y, z)`, normalized, to its `3 × 3`
    /// rotation matrix (columns are the rotated axes). Below
    /// [`QUAT_NORM_FLOOR`] the identity is returned with zero gradient.
    pub fn quat_to_mat(&mut self, q: Var) -> Var {
        let d = self.value(q).data();
        assert_eq!(d.len(), 4, "quaternion must have 4 entries");
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let m = if n < QUAT_NORM_FLOOR || !n.is_finite() {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        } else {
            quat_matrix([d[0] / n, d[1] / n, d[2] / n, d[3] / n])
        };
        self.push(Tensor::from_rows(&m.map(|r| r.to_vec())), Op::QuatToMat(q))
    }

    /// Robust range of `points` (`k × 3`, fixed data) along the columns of
    /// the `3 × 3` matrix `r`: row 0 holds the `q` and row 1 the `1 - q`
    /// nearest-rank quantile of the projections onto each column. Returns
    /// `2 × 3`.
    pub fn projected_quantiles(&mut self, points: &[[f64; 3]], r: Var, q: f64) -> Var {
        assert!(!points.is_empty(), "quantiles of an empty point set");
        let rv = self.value(r);
        let mut out = [0.0; 6];
        let mut picks = Vec::with_capacity(6);
        let (lo, hi) = quantile_ranks(points.len(), q);
        let mut proj: Vec<(f64, usize)> = Vec::with_capacity(points.len());
        for c in 0..3 {
            let axis = [rv.get(0, c), rv.get(1, c), rv.get(2, c)];
            proj.clear();
            proj.extend(
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2], i)),
            );
            proj.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            out[c] = proj[lo].0;
            out[3 + c] = proj[hi].0;
            picks.push(points[proj[lo].1]);
            picks.push(points[proj[hi].1]);
        }
        self.push(Tensor::new(vec![2, 3], out.to_vec()), Op::ProjectedQuantiles(r, picks))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 `labels`
    /// (same length), probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), labels.len(), "one label per probability");
        let mut s = 0.0;
        for (&x, &y) in pv.data().iter().zip(labels) {
            let x = x.clamp(PROB_EPS, 1.0 - PROB_EPS);
            s -= y * x.ln() + (1.0 - y) * (1.0 - x).ln();
        }
        let v = Tensor::scalar(s / labels.len().max(1) as f64);
        self.push(v, Op::Bce(p, labels.to_vec()))
    }

    /// Sum of focal losses of probabilities `p` against 0/1 `labels`.
    pub fn focal(&mut self, p: Var, labels: &[f64], alpha: f64, gamma: f64) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), labels.len(), "one label per probability");
        let s: f64 = pv
            .data()
            .iter()
            .zip(labels)
            .map(|(&x, &y)| focal_with_grad(x, y, alpha, gamma).0)
            .sum();
        self.push(Tensor::scalar(s), Op::Focal(p, labels.to_vec(), alpha, gamma))
    }

    /// Gradients of the `1 × 1` node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut g: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        g[loss.0] = Some(Tensor::scalar(1.0));
        fn acc(g: &mut [Option<Tensor>], v: Var, d: Tensor) {
            match &mut g[v.0] {
                Some(t) => t.add_assign(&d),
                slot => *slot = Some(d),
            }
        }
        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = gi.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).matmul_tn(&gi);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, gi.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, gi.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let da = gi.zip(self.value(*b), |x, y| x * y);
                    let db = gi.zip(self.value(*a), |x, y| x * y);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::AddRow(a, r) => {
                    acc(&mut g, *r, gi.sum_rows());
                    acc(&mut g, *a, gi.clone());
                }
                Op::MulRow(a, r) => {
                    let (av, rv) = (self.value(*a), self.value(*r));
                    let n = av.cols();
                    let da = Tensor::new(
                        gi.shape().to_vec(),
                        gi.data().iter().enumerate().map(|(k, &x)| x * rv.data()[k % n]).collect(),
                    );
                    let dr = gi.zip(av, |x, y| x * y).sum_rows();
                    acc(&mut g, *a, da);
                    acc(&mut g, *r, dr);
                }
                Op::Scale(a, c) => acc(&mut g, *a, gi.map(|x| x * c)),
                Op::AddScalar(a) => acc(&mut g, *a, gi.clone()),
                Op::Relu(a) => acc(&mut g, *a, gi.zip(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
                Op::Sigmoid(a) => acc(&mut g, *a, gi.zip(out, |x, s| x * s * (1.0 - s))),
                Op::Tanh(a) => acc(&mut g, *a, gi.zip(out, |x, t| x * (1.0 - t * t))),
                Op::Softplus(a) => acc(&mut g, *a, gi.zip(self.value(*a), |x, y| x * sigmoid(y))),
                Op::Log(a) => acc(
                    &mut g,
                    *a,
                    gi.zip(self.value(*a), |x, y| if y > PROB_EPS { x / y } else { 0.0 }),
                ),
                Op::Abs(a) => acc(&mut g, *a, gi.zip(self.value(*a), |x, y| x * y.signum() * (y != 0.0) as u8 as f64)),
                Op::MaxRows(a, arg) => {
                    let av = self.value(*a);
                    let mut d = Tensor::zeros(av.rows(), av.cols());
                    for (c, &r) in arg.iter().enumerate() {
                        d.set(r, c, gi.data()[c]);
                    }
                    acc(&mut g, *a, d);
                }
                Op::SegmentMax(a, arg) => {
                    let av = self.value(*a);
                    let n = av.cols();
                    let mut d = Tensor::zeros(av.rows(), n);
                    for (k, r) in arg.iter().enumerate() {
                        if let Some(r) = r {
                            let c = k % n;
                            let cur = d.get(*r, c);
                            d.set(*r, c, cur + gi.data()[k]);
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        let mut d = Vec::with_capacity(pv.len());
                        for r in 0..pv.rows() {
                            d.extend_from_slice(&gi.row_slice(r)[start..start + w]);
                        }
                        acc(&mut g, p, Tensor::new(vec![pv.rows(), w], d));
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let len = pv.len();
                        acc(&mut g, p, Tensor::new(vec![pv.rows(), pv.cols()], gi.data()[off..off + len].to_vec()));
                        off += len;
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut d = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..gi.rows() {
                        for c in 0..gi.cols() {
                            d.set(r, start + c, gi.get(r, c));
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::GatherRows(a, idx) => {
                    let av = self.value(*a);
                    let mut d = Tensor::zeros(av.rows(), av.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for c in 0..av.cols() {
                            let cur = d.get(i, c);
                            d.set(i, c, cur + gi.get(k, c));
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::Transpose(a) => acc(&mut g, *a, gi.transpose()),
                Op::Sum(a) => {
                    let av = self.value(*a);
                    acc(&mut g, *a, Tensor::filled(av.rows(), av.cols(), gi.data()[0]));
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    acc(&mut g, *a, Tensor::filled(av.rows(), av.cols(), gi.data()[0] / av.len() as f64));
                }
                Op::QuatToMat(q) => {
                    let d = self.value(*q).data();
                    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n < QUAT_NORM_FLOOR || !n.is_finite() {
                        acc(&mut g, *q, Tensor::zeros(1, 4));
                        continue;
                    }
                    let u = [d[0] / n, d[1] / n, d[2] / n, d[3] / n];
                    let mut gm = [[0.0; 3]; 3];
                    for (r, row) in gm.iter_mut().enumerate() {
                        for (c, x) in row.iter_mut().enumerate() {
                            *x = gi.get(r, c);
                        }
                    }
                    let gu = quat_matrix_grad(u, &gm);
                    let dotu: f64 = (0..4).map(|k| gu[k] * u[k]).sum();
                    let gq: Vec<f64> = (0..4).map(|k| (gu[k] - u[k] * dotu) / n).collect();
                    acc(&mut g, *q, Tensor::new(vec![1, 4], gq));
                }
                Op::ProjectedQuantiles(r, picks) => {
                    // picks alternate (lo, hi) per column
                    let mut d = Tensor::zeros(3, 3);
                    for c in 0..3 {
                        let (gl, gh) = (gi.get(0, c), gi.get(1, c));
                        let (pl, ph) = (picks[2 * c], picks[2 * c + 1]);
                        for k in 0..3 {
                            d.set(k, c, gl * pl[k] + gh * ph[k]);
                        }
                    }
                    acc(&mut g, *r, d);
                }
                Op::Bce(p, labels) => {
                    let pv = self.value(*p);
                    let n = labels.len().max(1) as f64;
                    let d: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&x, &y)| {
                            if x <= PROB_EPS || x >= 1.0 - PROB_EPS {
                                0.0
                            } else {
                                gi.data()[0] * (x - y) / (x * (1.0 - x)) / n
                            }
                        })
                        .collect();
                    acc(&mut g, *p, Tensor::new(pv.shape().to_vec(), d));
                }
                Op::Focal(p, labels, alpha, gamma) => {
                    let pv = self.value(*p);
                    let d: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&x, &y)| gi.data()[0] * focal_with_grad(x, y, *alpha, *gamma).1)
                        .collect();
                    acc(&mut g, *p, Tensor::new(pv.shape().to_vec(), d));
                }
            }
            g[i] = Some(gi);
        }
        Gradients { grads: g }
    }
}
