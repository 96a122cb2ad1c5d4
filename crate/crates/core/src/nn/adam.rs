use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{self, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| alloc::vec![T::ZERO; n]).collect(),
            v: sizes.iter().map(|&n| alloc::vec![T::ZERO; n]).collect(),
            step: 0,
        }
    }

    /// One bias-corrected update of every buffer.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let bc1 = T::from_f64(1.0 - math::powf(c.beta1, self.step as f64));
        let bc2 = T::from_f64(1.0 - math::powf(c.beta2, self.step as f64));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(c.eps));
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            assert_eq!(p.len(), g.len());
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
