//! Adam with bias correction and an optional cosine learning-rate schedule.

use crate::error::{CoreError, Result};

/// Learning rate at step `t` of a cosine decay over `horizon` steps:
/// `lr_min + (lr0 - lr_min) * 0.5 (cos(pi t / T) + 1)`.
pub fn cosine_lr(lr0: f64, lr_min: f64, t: u64, horizon: u64) -> f64 {
    let frac = (t as f64 / horizon.max(1) as f64).min(1.0);
    lr_min + (lr0 - lr_min) * 0.5 * ((std::f64::consts::PI * frac).cos() + 1.0)
}

/// Optimizer state: first/second moment accumulators, step counter, and the
/// schedule parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr0: f64,
    pub lr_min: f64,
    pub horizon: u64,
    pub cosine: bool,
}

impl Adam {
    pub fn new(n_params: usize, lr0: f64, horizon: u64, cosine: bool) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr0,
            lr_min: 0.0,
            horizon,
            cosine,
        }
    }

    pub fn with_lr_min(mut self, lr_min: f64) -> Self {
        self.lr_min = lr_min;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        if self.cosine {
            cosine_lr(self.lr0, self.lr_min, self.t, self.horizon)
        } else {
            self.lr0
        }
    }

    /// One update. Fails on non-finite gradient components, reporting the
    /// offending index so the caller can name the parameter block.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(CoreError::numerical(format!(
                "adam: non-finite gradient at parameter index {idx}"
            )));
        }
        let lr = self.current_lr();
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}
