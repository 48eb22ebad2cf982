//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::model::ModelState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: ModelState,
    v: ModelState,
}

impl AdamW {
    pub fn new(config: AdamWConfig, like: &ModelState) -> Self {
        AdamW {
            config,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelState, grads: &ModelState) {
        self.step += 1;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            update(&self.config, self.step, p, g, m, v);
        }
    }
}

/// One AdamW update of a flat tensor at step `t` (1-based).
pub fn update(c: &AdamWConfig, t: u64, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    let t = t as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.lr * c.weight_decay;
    for i in 0..p.len() {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] = p[i] * decay - c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Linear, ModelDims};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let dims = ModelDims { input: 2, hidden: 2, latent: 2, domains: 3, projection: 2, classes: 2 };
        let mut p = ModelState::init(dims, 3);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.cls = Linear { w: ndarray::array![[1.0, -2.0], [0.0, 0.5]], b: ndarray::array![0.0, 0.0] };
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() }, &p);
        opt.step(&mut p, &g);
        // |m_hat / sqrt(v_hat)| = 1 for a nonzero first gradient
        let w0 = before.cls.w[[0, 0]] * (1.0 - 0.1 * 0.01) - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.cls.w[[0, 0]] - w0).abs() < 1e-15);
        let w1 = before.cls.w[[0, 1]] * (1.0 - 0.1 * 0.01) + 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((p.cls.w[[0, 1]] - w1).abs() < 1e-15);
        // zero gradient: weight decay only
        assert_eq!(p.cls.w[[1, 0]], before.cls.w[[1, 0]] * (1.0 - 0.1 * 0.01));
    }
}
