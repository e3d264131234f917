//! Named parameter tensors and their initialization.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::structure::FEATURE_DIM;
use crate::{Error, Result};

/// Hidden width of the per-point part encoder.
pub const POINT_HIDDEN: usize = 64;
/// Width of edge, candidate and merge features.
pub const WIDE_DIM: usize = 256;
/// Number of relation types predicted per sibling pair.
pub const RELATION_TYPES: usize = 4;
/// Bias of the scale head at initialization: softplus of it is 1.
pub const SCALE_BIAS_INIT: f64 = 0.541_324_854_612_918_1;

/// Parameter set of one network, keyed by name. Linear layers store
/// `<name>.w` (`in × out`) and `<name>.b` (`1 × out`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter tensor {name}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensors in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Adds a Xavier-uniform linear layer with zero bias.
    pub fn add_linear(&mut self, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) {
        let bound = (6.0 / (input + output) as f64).sqrt();
        self.insert(format!("{name}.w"), Tensor::uniform(input, output, bound, rng));
        self.insert(format!("{name}.b"), Tensor::zeros(1, output));
    }

    /// Structure network: part/child/context encoders, relation classifier,
    /// message passing and box decoder.
    pub fn structure(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FEATURE_DIM;
        let mut p = ModelParams::new();
        p.add_linear("part.l1", 3, POINT_HIDDEN, &mut rng);
        p.add_linear("part.l2", POINT_HIDDEN, f, &mut rng);
        p.add_linear("part.out", f, f, &mut rng);
        p.add_linear("child.lin", f, f, &mut rng);
        p.add_linear("ctx.lin", 2 * f, f, &mut rng);
        p.add_linear("edge.l1", 2 * f, WIDE_DIM, &mut rng);
        p.add_linear("edge.l2", WIDE_DIM, WIDE_DIM, &mut rng);
        p.add_linear("edge.tau", WIDE_DIM, RELATION_TYPES, &mut rng);
        p.add_linear("mp.msg1", 2 * f + WIDE_DIM, f, &mut rng);
        p.add_linear("mp.msg2", 2 * f + WIDE_DIM, f, &mut rng);
        p.add_linear("mp.upd1", 2 * f, f, &mut rng);
        p.add_linear("mp.upd2", 2 * f, f, &mut rng);
        p.add_linear("mp.out", 2 * f, f, &mut rng);
        p.add_linear("box.offset", f, 3, &mut rng);
        p.add_linear("box.scale", f, 3, &mut rng);
        p.add_linear("box.rot", f, 4, &mut rng);
        p.insert("box.rot.b", Tensor::row(&[1.0, 0.0, 0.0, 0.0]));
        p.insert("box.scale.b", Tensor::filled(1, 3, SCALE_BIAS_INIT));
        p
    }

    /// Merge network over `labels` semantic classes: candidate encoder,
    /// feature fusions and the scoring head.
    pub fn merge(seed: u64, labels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, w) = (FEATURE_DIM, WIDE_DIM);
        let mut p = ModelParams::new();
        p.add_linear("cand.l1", 4 + labels, POINT_HIDDEN, &mut rng);
        p.add_linear("cand.l2", POINT_HIDDEN, w, &mut rng);
        p.add_linear("fuse_n", w + f, w, &mut rng);
        p.add_linear("merge_m", 2 * w, w, &mut rng);
        p.add_linear("struct_s", w + f, w, &mut rng);
        p.add_linear("gm.l1", w, 64, &mut rng);
        p.add_linear("gm.l2", 64, 1, &mut rng);
        p
    }

    /// Number of semantic classes a merge network was built for.
    pub fn merge_label_count(&self) -> Result<usize> {
        let w = self.require("cand.l1.w")?;
        w.rows()
            .checked_sub(4)
            .ok_or_else(|| Error::Config("cand.l1.w has fewer than 4 rows".into()))
    }

    /// Checks that every tensor of `self` exists in `reference` with the
    /// same shape, and vice versa.
    pub fn check_layout(&self, reference: &ModelParams) -> Result<()> {
        for (name, t) in &reference.tensors {
            let got = self.require(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !reference.tensors.contains_key(*k)) {
            return Err(Error::Config(format!("unexpected parameter tensor {extra}")));
        }
        Ok(())
    }

    /// Puts every tensor on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), tape.leaf(t.clone())))
                .collect(),
        }
    }
}

/// Parameters placed on a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Binding from explicit `(name, var)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: pairs.into_iter().collect(),
        }
    }

    /// Panics on an unknown name; layouts are checked when parameters are
    /// loaded, so a miss here is a programming error.
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// `x · W + b` for the linear layer `name`.
    pub fn linear(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        let w = self.var(&format!("{name}.w"));
        let b = self.var(&format!("{name}.b"));
        let h = tape.matmul(x, w);
        tape.add_row(h, b)
    }

    /// `relu(x · W + b)`.
    pub fn dense_relu(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        let h = self.linear(tape, name, x);
        tape.relu(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn seeded_initialization_is_repeatable() {
        assert_eq!(ModelParams::structure(3), ModelParams::structure(3));
        assert_ne!(ModelParams::structure(3), ModelParams::structure(4));
        assert_eq!(ModelParams::merge(1, 5).merge_label_count().unwrap(), 5);
    }

    #[test]
    fn scale_bias_gives_unit_softplus() {
        assert_abs_diff_eq!(SCALE_BIAS_INIT.exp().ln_1p(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn layout_check_catches_shape_changes() {
        let a = ModelParams::merge(0, 4);
        assert!(a.check_layout(&ModelParams::merge(9, 4)).is_ok());
        assert!(a.check_layout(&ModelParams::merge(0, 5)).is_err());
        assert!(a.check_layout(&ModelParams::structure(0)).is_err());
    }
}
