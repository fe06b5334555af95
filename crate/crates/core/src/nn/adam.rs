use serde::{Deserialize, Serialize};

use super::{Gradient, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<M: Parameterized + ?Sized>(model: &M, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.param_blocks().iter().map(|(_, b)| vec![0.0; b.len()]).collect();
        Self { config, step: 0, first_moment: zeros.clone(), second_moment: zeros }
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M, grad: &Gradient) -> Result<()> {
        let mut params = model.param_blocks_mut();
        if params.len() != grad.blocks.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape("Adam state, gradient and parameters disagree on block count"));
        }
        for ((p, g), m) in params.iter().zip(&grad.blocks).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::shape("Adam block length mismatch"));
            }
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in
            params.iter_mut().zip(&grad.blocks).zip(&mut self.first_moment).zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
