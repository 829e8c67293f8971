//! AdamW with decoupled weight decay and bias correction.

use std::collections::BTreeMap;

use crate::error::{NumericsError, Result};
use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every parameter that has a gradient in `grads`.
    ///
    /// The learning rate can be overridden per step (schedules) via `lr`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap, lr: Option<f64>) -> Result<()> {
        let lr = lr.unwrap_or(self.config.lr);
        if !(lr > 0.0) {
            return Err(NumericsError::Optimizer(format!("learning rate must be positive, got {lr}")));
        }
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| NumericsError::Optimizer(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adamw_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            for moments in [&self.m, &self.v] {
                if let Some(t) = moments.get(name) {
                    if t.shape() != p.shape() {
                        return Err(NumericsError::ShapeMismatch {
                            op: "adamw_state",
                            left: p.shape().to_vec(),
                            right: t.shape().to_vec(),
                        });
                    }
                }
            }
        }

        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * *pi);
            }
        }
        Ok(())
    }
}
