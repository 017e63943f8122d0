//! Adam with classic L2-style weight decay.
//!
//! The decay term is added to the raw gradient *before* the moment updates
//! (the convention matching this model family), not applied decoupled.

use super::tensor::{GradAccum, ParamSet};
use super::NumericsError;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Per-parameter moment buffers plus the step counter.
#[derive(Debug)]
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: vec![None; params.len()],
            v: vec![None; params.len()],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every trainable parameter that has a
    /// gradient. A non-finite gradient aborts with *no* parameter mutated.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradAccum) -> Result<(), NumericsError> {
        for (_, g) in grads.iter() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite("gradient"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (id, g) in grads.iter() {
            debug_assert!(
                params.entry(id).trainable(),
                "gradient reached frozen parameter {}",
                params.entry(id).name()
            );
            let idx = id.index();
            let n = g.len();
            let m = self.m[idx].get_or_insert_with(|| vec![0.0; n]);
            let v = self.v[idx].get_or_insert_with(|| vec![0.0; n]);
            let w = params.data_mut(id);
            for i in 0..n {
                let gi = g[i] + c.weight_decay * w[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
