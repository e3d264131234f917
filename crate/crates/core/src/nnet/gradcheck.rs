//! Finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Floor of the relative-error denominator, so vanishing derivatives are
/// compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

/// Outcome of [`gradcheck`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADCHECK_TOLERANCE
    }
}

fn evaluate(inputs: &[Tensor], f: &impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.scalar(loss)
}

/// Compares the analytic directional derivative of `f` at `inputs` with a
/// central difference along `probes` random unit directions.
pub fn gradcheck(
    inputs: &[Tensor],
    f: impl Fn(&mut Tape, &[Var]) -> Var,
    probes: usize,
    seed: u64,
) -> GradcheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    for _ in 0..probes {
        let mut dirs: Vec<Tensor> = inputs
            .iter()
            .map(|t| {
                let d = (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                Tensor::new(t.shape().to_vec(), d)
            })
            .collect();
        let norm = dirs.iter().map(|d| d.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        for d in &mut dirs {
            for x in d.data_mut() {
                *x /= norm;
            }
        }
        let shifted = |sign: f64| -> Vec<Tensor> {
            inputs
                .iter()
                .zip(&dirs)
                .map(|(t, d)| t.zip(d, |a, b| a + sign * GRADCHECK_STEP * b))
                .collect()
        };
        let numeric = (evaluate(&shifted(1.0), &f) - evaluate(&shifted(-1.0), &f)) / (2.0 * GRADCHECK_STEP);
        let exact: f64 = analytic
            .iter()
            .zip(&dirs)
            .map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(GRADCHECK_FLOOR);
        max_rel = max_rel.max(rel);
    }
    GradcheckReport {
        probes,
        max_rel_error: max_rel,
    }
}
