use serde::{Deserialize, Serialize};

use super::Module;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with per-tensor moment buffers.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new<M: Module>(config: AdamConfig, params: &M) -> Self {
        let shapes: Vec<usize> = params.params().iter().map(|p| p.data.len()).collect();
        Adam {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<M: Module>(&mut self, params: &mut M, grads: &M) -> Result<()> {
        let gviews = grads.params();
        let pviews = params.params_mut();
        if gviews.len() != self.m.len() || pviews.len() != self.m.len() {
            return Err(Error::dims("adam tensor count", self.m.len(), pviews.len().min(gviews.len())));
        }
        for ((i, g), p) in gviews.iter().enumerate().zip(pviews.iter()) {
            if g.data.len() != self.m[i].len() || p.len() != self.m[i].len() {
                return Err(Error::dims(format!("adam tensor `{}`", g.name), self.m[i].len(), g.data.len()));
            }
        }
        grads.check_finite("adam gradients")?;
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (g, p)) in gviews.iter().zip(pviews.into_iter()).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                let gj = g.data[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
