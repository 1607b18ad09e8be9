//! Adam optimizer keeping first/second moment state per named parameter.
//!
//! Models expose their parameters through a visitor (`for_each_param`), so
//! the optimizer only needs stable names and flat slices. State is stored in
//! a BTreeMap to keep iteration order deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::num::{real, Real};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments<F> {
    m: Vec<F>,
    v: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    state: BTreeMap<String, Moments<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, state: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advances the shared step counter. Call once per optimization step,
    /// before updating the parameters of that step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies the Adam update to one named parameter in place.
    pub fn update(&mut self, name: &str, param: &mut [F], grad: &[F]) {
        assert_eq!(param.len(), grad.len(), "param/grad length mismatch for {name}");
        assert!(self.step > 0, "begin_step must be called before update");
        let entry = self.state.entry(name.to_string()).or_insert_with(|| Moments {
            m: vec![F::zero(); param.len()],
            v: vec![F::zero(); param.len()],
        });
        assert_eq!(entry.m.len(), param.len(), "param {name} changed size");
        let b1 = real::<F>(self.config.beta1);
        let b2 = real::<F>(self.config.beta2);
        let eps = real::<F>(self.config.eps);
        let lr = real::<F>(self.config.lr);
        let t = self.step as i32;
        let bias1 = F::one() - b1.powi(t);
        let bias2 = F::one() - b2.powi(t);
        for i in 0..param.len() {
            let g = grad[i];
            entry.m[i] = b1 * entry.m[i] + (F::one() - b1) * g;
            entry.v[i] = b2 * entry.v[i] + (F::one() - b2) * g * g;
            let m_hat = entry.m[i] / bias1;
            let v_hat = entry.v[i] / bias2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
