use serde::{Deserialize, Serialize};

use super::params::LayerParams;
use crate::error::{Error, Result};

/// Bias-corrected ADAM moments for every parameter of a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &LayerParams) -> Self {
        Self::with_hyperparameters(params, 0.9, 0.999, 1e-8).expect("default ADAM constants are valid")
    }

    pub fn with_hyperparameters(params: &LayerParams, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid("ADAM betas must lie in [0, 1)"));
        }
        let zeros = || params.named().map(|(_, t)| vec![0.0; t.len()]).collect();
        Ok(AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    /// Applies one update using the gradients stored on the parameters.
    /// Parameters without a gradient are left in place.
    pub fn step(&mut self, params: &mut LayerParams, lr: f64) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(Error::LengthMismatch {
                expected: self.first.len(),
                actual: params.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, m), v) in params
            .tensors_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let Some(grad) = p.grad.take() else {
                continue;
            };
            if grad.len() != m.len() {
                return Err(Error::LengthMismatch {
                    expected: m.len(),
                    actual: grad.len(),
                });
            }
            let data = p.data_mut();
            for i in 0..grad.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Triangular cyclical learning-rate policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicalSchedule {
    pub base_lr: f64,
    pub max_lr: f64,
    /// Half-cycle length in batches.
    pub step_size: u64,
}

impl CyclicalSchedule {
    pub fn new(base_lr: f64, max_lr: f64, step_size: u64) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr < max_lr) || step_size == 0 {
            return Err(Error::invalid(
                "cyclical schedule needs 0 < base_lr < max_lr and step_size > 0",
            ));
        }
        Ok(CyclicalSchedule {
            base_lr,
            max_lr,
            step_size,
        })
    }

    /// Default constants for a run with `batches_per_epoch` batches.
    pub fn for_epoch(batches_per_epoch: usize) -> Self {
        CyclicalSchedule {
            base_lr: 1e-4,
            max_lr: 1e-3,
            step_size: 4 * batches_per_epoch.max(1) as u64,
        }
    }

    pub fn lr(&self, batch_counter: u64) -> f64 {
        let pos = batch_counter as f64 / self.step_size as f64;
        let cycle = (batch_counter / (2 * self.step_size)) as f64;
        let x = (pos - (2.0 * cycle + 1.0)).abs();
        self.base_lr + (self.max_lr - self.base_lr) * (1.0 - x).max(0.0)
    }
}
