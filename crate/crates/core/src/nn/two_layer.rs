//! Two-layer ReLU^3 network `phi(x) = (1/M) sum_m c_m sigma(w_m^T x)` with
//! `sigma(z) = max(0, z^3/6)`, optional parameter clamping, and fully
//! analytic derivative paths (the input Hessian of each neuron is
//! `c_m sigma''(z) w_m w_m^T / M`).

use crate::error::{CoreError, Result};
use crate::nn::activation::Activation;
use crate::nn::NetWorkspace;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerRelu3 {
    pub(crate) input_dim: usize,
    pub(crate) neurons: usize,
    /// Parameter bound `Q`: after clamping, `|c_m| <= Q` and `||w_m||_1 <= Q`.
    pub(crate) clamp: Option<f64>,
    /// Layout: `[c_1..c_M, w_1 row, ..., w_M row]`.
    pub(crate) params: Vec<f64>,
}

const ACT: Activation = Activation::Relu3;

impl TwoLayerRelu3 {
    pub fn new(input_dim: usize, neurons: usize, clamp: Option<f64>) -> Result<Self> {
        if input_dim == 0 || neurons == 0 {
            return Err(CoreError::contract(
                "TwoLayerRelu3: need input_dim >= 1 and neurons >= 1",
            ));
        }
        if let Some(q) = clamp {
            if !(q > 0.0) {
                return Err(CoreError::contract("TwoLayerRelu3: clamp bound must be > 0"));
            }
        }
        Ok(TwoLayerRelu3 {
            input_dim,
            neurons,
            clamp,
            params: vec![0.0; neurons * (input_dim + 1)],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn clamp_bound(&self) -> Option<f64> {
        self.clamp
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn outer_weights(&self) -> &[f64] {
        &self.params[..self.neurons]
    }

    pub fn inner_row(&self, m: usize) -> &[f64] {
        let off = self.neurons + m * self.input_dim;
        &self.params[off..off + self.input_dim]
    }

    pub fn param_block_name(&self, idx: usize) -> String {
        if idx < self.neurons {
            format!("c[{idx}]")
        } else {
            let local = idx - self.neurons;
            format!("w[{},{}]", local / self.input_dim, local % self.input_dim)
        }
    }

    /// Rescale any row with `||w_m||_1 > Q` back onto the bound and clip the
    /// outer weights into `[-Q, Q]`. Idempotent; a no-op when no bound is set.
    pub fn clamp_parameters(&mut self) {
        let Some(q) = self.clamp else { return };
        let (c_part, w_part) = self.params.split_at_mut(self.neurons);
        for cm in c_part.iter_mut() {
            *cm = cm.clamp(-q, q);
        }
        for row in w_part.chunks_exact_mut(self.input_dim) {
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            if l1 > q {
                let scale = q / l1;
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], order: usize, ws: &mut NetWorkspace) -> f64 {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        ws.ensure_two_layer(self, order);
        ws.x[..x.len()].copy_from_slice(x);
        ws.order = order;
        let d = self.input_dim;
        let dd = d * d;
        let inv_m = 1.0 / self.neurons as f64;
        if order >= 1 {
            ws.out_grad[..d].fill(0.0);
        }
        if order >= 2 {
            ws.out_hess[..dd].fill(0.0);
        }
        let mut value = 0.0;
        let c = &self.params[..self.neurons];
        for m in 0..self.neurons {
            let w = &self.params[self.neurons + m * d..self.neurons + (m + 1) * d];
            let mut z = 0.0;
            for a in 0..d {
                z += w[a] * x[a];
            }
            ws.z[m] = z;
            let (s, s1, s2) = ACT.eval2(z);
            let cm = c[m] * inv_m;
            value += cm * s;
            if order >= 1 && s1 != 0.0 {
                let cs1 = cm * s1;
                for a in 0..d {
                    ws.out_grad[a] += cs1 * w[a];
                }
            }
            if order >= 2 && s2 != 0.0 {
                let cs2 = cm * s2;
                for a in 0..d {
                    let wa = cs2 * w[a];
                    for b in 0..d {
                        ws.out_hess[a * d + b] += wa * w[b];
                    }
                }
            }
        }
        value
    }

    /// Adjoint pull-back for `(value, grad, hess)`; analytic counterpart of
    /// [`crate::nn::feedforward::FeedForward::backward2`]. Must follow
    /// [`TwoLayerRelu3::eval`] on the same input.
    pub fn backward2(
        &self,
        av: f64,
        ag: &[f64],
        ah: &[f64],
        ws: &mut NetWorkspace,
        grad_acc: &mut [f64],
    ) {
        let d = self.input_dim;
        let inv_m = 1.0 / self.neurons as f64;
        let x = &ws.x;
        for m in 0..self.neurons {
            let z = ws.z[m];
            let (s, s1, s2, s3) = ACT.eval3(z);
            let w = &self.params[self.neurons + m * d..self.neurons + (m + 1) * d];
            let mut agw = 0.0;
            let mut ahww = 0.0;
            for a in 0..d {
                agw += ag[a] * w[a];
                let mut row = 0.0;
                for b in 0..d {
                    row += ah[a * d + b] * w[b];
                }
                ws.scratch[a] = row; // (A h w)_a
                ahww += w[a] * row;
            }
            grad_acc[m] += inv_m * (av * s + s1 * agw + s2 * ahww);
            let cm = self.params[m] * inv_m;
            if cm == 0.0 {
                continue;
            }
            let coef_x = av * s1 + s2 * agw + s3 * ahww;
            let woff = self.neurons + m * d;
            for a in 0..d {
                // (A^T h w)_a
                let mut col = 0.0;
                for b in 0..d {
                    col += ah[b * d + a] * w[b];
                }
                grad_acc[woff + a] +=
                    cm * (coef_x * x[a] + s1 * ag[a] + s2 * (ws.scratch[a] + col));
            }
        }
    }

    /// Value-only adjoint: accumulates `upstream * d(value)/d(theta)`.
    pub fn backward0(&self, upstream: f64, ws: &mut NetWorkspace, grad_acc: &mut [f64]) {
        let d = self.input_dim;
        let inv_m = 1.0 / self.neurons as f64;
        for m in 0..self.neurons {
            let (s, s1, _) = ACT.eval2(ws.z[m]);
            grad_acc[m] += upstream * inv_m * s;
            if s1 == 0.0 {
                continue;
            }
            let cm = self.params[m] * inv_m;
            let coef = upstream * cm * s1;
            let woff = self.neurons + m * d;
            for a in 0..d {
                grad_acc[woff + a] += coef * ws.x[a];
            }
        }
    }
}
