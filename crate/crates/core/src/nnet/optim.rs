//! Adam with step-wise exponential learning-rate decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ModelParams, Tensor};
use crate::{Error, Result};

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplier applied to the learning rate every `decay_every` steps.
    pub decay: f64,
    pub decay_every: u64,
    /// Gradients with a larger global norm are rescaled to it.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.8,
            decay_every: 500,
            clip_norm: Some(10.0),
        }
    }
}

impl AdamConfig {
    /// Default settings with another initial learning rate.
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }

    /// Learning rate in effect for the zero-based step `step`.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let k = step.checked_div(self.decay_every).unwrap_or(0);
        self.learning_rate * self.decay.powi(k.min(i32::MAX as u64) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.decay > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam state: first and second moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::new(t.shape().to_vec(), vec![0.0; t.len()])))
            .collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn current_learning_rate(&self) -> f64 {
        self.config.learning_rate_at(self.step)
    }

    /// One update. Parameters without a gradient entry are left alone (their
    /// moments still decay). Returns the global gradient norm before
    /// clipping.
    pub fn step(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Tensor>) -> Result<f64> {
        let norm = grads
            .values()
            .flat_map(|g| g.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient norm at step {}", self.step)));
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let lr = self.current_learning_rate();
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self.m.get_mut(name).expect("moments built from params");
            let v = self.v.get_mut(name).expect("moments built from params");
            let g = grads.get(name);
            let pd = p.data_mut();
            for k in 0..pd.len() {
                let gk = g.map_or(0.0, |g| g.data()[k] * clip);
                let mk = &mut m.data_mut()[k];
                *mk = b1 * *mk + (1.0 - b1) * gk;
                let mk = *mk;
                let vk = &mut v.data_mut()[k];
                *vk = b2 * *vk + (1.0 - b2) * gk * gk;
                let vk = *vk;
                pd[k] -= lr * (mk / c1) / ((vk / c2).sqrt() + self.config.epsilon);
            }
        }
        Ok(norm)
    }
}
