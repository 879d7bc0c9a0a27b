use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are kept in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<S: Scalar>(config: AdamConfig, params: &ParamStore<S>) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One update; `grads` are in parameter-store order.
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>, grads: &[Vec<S>]) -> Result<()> {
        if grads.len() != self.m.len() || grads.iter().zip(&self.m).any(|(g, m)| g.len() != m.len()) {
            return Err(Error::shape("adam_step", format!("{} gradients for {} parameters", grads.len(), self.m.len())));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..g.len() {
                let gi = g[i].as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p.data[i] -= S::of(update);
            }
        }
        Ok(())
    }
}
