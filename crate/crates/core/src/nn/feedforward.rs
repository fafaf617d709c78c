//! Fully connected scalar networks (plain MLP or ResNet with zero-padded
//! skip connections) with hand-written derivative passes.
//!
//! The second-order PDE loss needs, per collocation point, the network value
//! together with its input gradient and input Hessian, *and* the parameter
//! gradient of any linear combination of those three. The forward pass
//! propagates `(value, d/dx, d^2/dx^2)` per neuron; the reverse pass pulls an
//! adjoint `(v_bar, g_bar, H_bar)` back through the same recurrence. That is
//! forward-over-reverse differentiation specialized to this architecture; no
//! tape, no allocation in the hot loop.

use crate::error::{CoreError, Result};
use crate::nn::activation::Activation;
use crate::nn::NetWorkspace;

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward {
    pub(crate) input_dim: usize,
    pub(crate) widths: Vec<usize>,
    pub(crate) activation: Activation,
    pub(crate) resnet: bool,
    pub(crate) params: Vec<f64>,
    // (w_offset, g_offset) per layer
    pub(crate) layer_off: Vec<(usize, usize)>,
    pub(crate) c_off: usize,
}

impl FeedForward {
    pub fn new(
        input_dim: usize,
        widths: Vec<usize>,
        activation: Activation,
        resnet: bool,
    ) -> Result<Self> {
        if input_dim == 0 || widths.is_empty() || widths.iter().any(|&w| w == 0) {
            return Err(CoreError::contract(
                "FeedForward: need input_dim >= 1 and at least one nonzero-width hidden layer",
            ));
        }
        if resnet {
            // the skip pads the shorter summand; a source longer than its
            // target layer has nowhere to go
            for l in 1..widths.len() {
                let src = if l == 1 { input_dim } else { widths[l - 2] };
                if src > widths[l] {
                    return Err(CoreError::contract(format!(
                        "FeedForward: skip source of length {src} exceeds layer width {}",
                        widths[l]
                    )));
                }
            }
            if widths.len() >= 2 && input_dim > widths[1] {
                return Err(CoreError::contract(
                    "FeedForward: input skip wider than second layer",
                ));
            }
        }
        let mut layer_off = Vec::with_capacity(widths.len());
        let mut off = 0usize;
        let mut prev = input_dim;
        for &w in &widths {
            layer_off.push((off, off + w * prev));
            off += w * prev + w;
            prev = w;
        }
        let c_off = off;
        off += *widths.last().unwrap();
        Ok(FeedForward {
            input_dim,
            widths,
            activation,
            resnet,
            params: vec![0.0; off],
            layer_off,
            c_off,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_resnet(&self) -> bool {
        self.resnet
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

    fn layer_dims(&self, l: usize) -> (usize, usize) {
        let rows = self.widths[l];
        let cols = if l == 0 {
            self.input_dim
        } else {
            self.widths[l - 1]
        };
        (rows, cols)
    }

    /// Human-readable parameter block for an index into the flat vector.
    pub fn param_block_name(&self, idx: usize) -> String {
        for (l, &(w_off, g_off)) in self.layer_off.iter().enumerate() {
            let (rows, cols) = self.layer_dims(l);
            if idx < g_off {
                let local = idx - w_off;
                return format!("W{}[{},{}]", l + 1, local / cols, local % cols);
            }
            if idx < g_off + rows {
                return format!("g{}[{}]", l + 1, idx - g_off);
            }
        }
        format!("c[{}]", idx - self.c_off)
    }

    /// Forward pass storing per-layer state in `ws`. `order` 0 stores values
    /// only; 1 adds input gradients; 2 adds input Hessians. Returns the
    /// output value; `ws.out_grad` / `ws.out_hess` hold the derivatives.
    pub fn eval(&self, x: &[f64], order: usize, ws: &mut NetWorkspace) -> f64 {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        ws.ensure_feedforward(self, order);
        ws.x[..x.len()].copy_from_slice(x);
        ws.order = order;
        let d = self.input_dim;
        let dd = d * d;
        let n_layers = self.widths.len();

        for l in 0..n_layers {
            let (rows, cols) = self.layer_dims(l);
            let (w_off, g_off) = self.layer_off[l];
            let w = &self.params[w_off..w_off + rows * cols];
            let g = &self.params[g_off..g_off + rows];
            let (before, rest) = ws.layers.split_at_mut(l);
            let cur = &mut rest[0];

            // linear stage: u = W h_prev + g, with derivative carry
            if l == 0 {
                for i in 0..rows {
                    let wrow = &w[i * cols..(i + 1) * cols];
                    let mut acc = g[i];
                    for k in 0..cols {
                        acc += wrow[k] * x[k];
                    }
                    cur.u_val[i] = acc;
                }
                if order >= 1 {
                    // previous "gradient" is the identity
                    cur.u_grad[..rows * d].copy_from_slice(&w[..rows * d]);
                }
                if order >= 2 {
                    cur.u_hess[..rows * dd].fill(0.0);
                }
            } else {
                let prev = &before[l - 1];
                for i in 0..rows {
                    let wrow = &w[i * cols..(i + 1) * cols];
                    let mut acc = g[i];
                    for (wv, hv) in wrow.iter().zip(prev.h_val.iter()) {
                        acc += wv * hv;
                    }
                    cur.u_val[i] = acc;
                    if order >= 1 {
                        let urow = &mut cur.u_grad[i * d..(i + 1) * d];
                        urow.fill(0.0);
                        for (k, &c) in wrow.iter().enumerate() {
                            let prow = &prev.h_grad[k * d..(k + 1) * d];
                            for (u, p) in urow.iter_mut().zip(prow.iter()) {
                                *u += c * p;
                            }
                        }
                    }
                    if order >= 2 {
                        let urow = &mut cur.u_hess[i * dd..(i + 1) * dd];
                        urow.fill(0.0);
                        for (k, &c) in wrow.iter().enumerate() {
                            let prow = &prev.h_hess[k * dd..(k + 1) * dd];
                            for (u, p) in urow.iter_mut().zip(prow.iter()) {
                                *u += c * p;
                            }
                        }
                    }
                }
            }

            // activation stage; derivative order decides how much
            // transcendental work each neuron pays
            match order {
                0 => {
                    for i in 0..rows {
                        cur.h_val[i] = self.activation.value_fast(cur.u_val[i]);
                    }
                }
                1 => {
                    for i in 0..rows {
                        let (v, d1) = self.activation.eval1(cur.u_val[i]);
                        cur.h_val[i] = v;
                        let ug = &cur.u_grad[i * d..(i + 1) * d];
                        let hg = &mut cur.h_grad[i * d..(i + 1) * d];
                        for (h, u) in hg.iter_mut().zip(ug.iter()) {
                            *h = d1 * u;
                        }
                    }
                }
                _ => {
                    for i in 0..rows {
                        let (v, d1, d2) = self.activation.eval2(cur.u_val[i]);
                        cur.h_val[i] = v;
                        let ug = i * d;
                        for a in 0..d {
                            cur.h_grad[ug + a] = d1 * cur.u_grad[ug + a];
                        }
                        let uh = i * dd;
                        for a in 0..d {
                            let ga = d2 * cur.u_grad[ug + a];
                            let urow = &cur.u_grad[ug..ug + d];
                            let hrow = &mut cur.h_hess[uh + a * d..uh + (a + 1) * d];
                            let uhrow = &cur.u_hess[uh + a * d..uh + (a + 1) * d];
                            for ((h, ub), uhv) in
                                hrow.iter_mut().zip(urow.iter()).zip(uhrow.iter())
                            {
                                *h = ga * ub + d1 * uhv;
                            }
                        }
                    }
                }
            }

            // skip stage: h_l += pad(h_{l-2})
            if self.resnet {
                if l == 1 {
                    for k in 0..d {
                        cur.h_val[k] += x[k];
                    }
                    if order >= 1 {
                        for k in 0..d {
                            cur.h_grad[k * d + k] += 1.0;
                        }
                    }
                } else if l >= 2 {
                    let src = &before[l - 2];
                    let slen = self.widths[l - 2];
                    for k in 0..slen {
                        cur.h_val[k] += src.h_val[k];
                    }
                    if order >= 1 {
                        for t in 0..slen * d {
                            cur.h_grad[t] += src.h_grad[t];
                        }
                    }
                    if order >= 2 {
                        for t in 0..slen * dd {
                            cur.h_hess[t] += src.h_hess[t];
                        }
                    }
                }
            }
        }

        // output contraction with c
        let top_w = *self.widths.last().unwrap();
        let c = &self.params[self.c_off..self.c_off + top_w];
        let top = &ws.layers[n_layers - 1];
        let mut value = 0.0;
        for i in 0..top_w {
            value += c[i] * top.h_val[i];
        }
        if order >= 1 {
            ws.out_grad[..d].fill(0.0);
            for i in 0..top_w {
                let ci = c[i];
                let row = &top.h_grad[i * d..(i + 1) * d];
                for a in 0..d {
                    ws.out_grad[a] += ci * row[a];
                }
            }
        }
        if order >= 2 {
            ws.out_hess[..dd].fill(0.0);
            for i in 0..top_w {
                let ci = c[i];
                let row = &top.h_hess[i * dd..(i + 1) * dd];
                for t in 0..dd {
                    ws.out_hess[t] += ci * row[t];
                }
            }
        }
        value
    }

    /// Reverse pass for the adjoint `(av, ag, ah)` of `(value, grad, hess)`,
    /// accumulating into the flat parameter gradient. Must follow an
    /// [`FeedForward::eval`] with `order = 2` on the same input.
    pub fn backward2(
        &self,
        av: f64,
        ag: &[f64],
        ah: &[f64],
        ws: &mut NetWorkspace,
        grad_acc: &mut [f64],
    ) {
        debug_assert_eq!(ws.order, 2, "backward2 requires an order-2 forward");
        let d = self.input_dim;
        let dd = d * d;
        let n_layers = self.widths.len();
        let top_w = *self.widths.last().unwrap();
        let c = &self.params[self.c_off..self.c_off + top_w];

        for (l, buf) in ws.layers.iter_mut().enumerate() {
            let rows = self.widths[l];
            buf.a_val[..rows].fill(0.0);
            buf.a_grad[..rows * d].fill(0.0);
            buf.a_hess[..rows * dd].fill(0.0);
        }

        // seed the top layer and the output-weight gradient
        {
            let top = &mut ws.layers[n_layers - 1];
            for i in 0..top_w {
                let ci = c[i];
                top.a_val[i] = ci * av;
                let mut cbar = av * top.h_val[i];
                for a in 0..d {
                    top.a_grad[i * d + a] = ci * ag[a];
                    cbar += ag[a] * top.h_grad[i * d + a];
                }
                for t in 0..dd {
                    top.a_hess[i * dd + t] = ci * ah[t];
                    cbar += ah[t] * top.h_hess[i * dd + t];
                }
                grad_acc[self.c_off + i] += cbar;
            }
        }

        for l in (0..n_layers).rev() {
            let (rows, cols) = self.layer_dims(l);
            let (w_off, g_off) = self.layer_off[l];
            let (before, rest) = ws.layers.split_at_mut(l);
            let cur = &mut rest[0];

            // distribute the skip part of h_l's adjoint to its source
            if self.resnet && l >= 2 {
                let src = &mut before[l - 2];
                let slen = self.widths[l - 2];
                for k in 0..slen {
                    src.a_val[k] += cur.a_val[k];
                }
                for t in 0..slen * d {
                    src.a_grad[t] += cur.a_grad[t];
                }
                for t in 0..slen * dd {
                    src.a_hess[t] += cur.a_hess[t];
                }
            }
            // (l == 1 skips into the input, whose adjoint is not needed)

            // activation backward, in place: (h̄) -> (ū)
            for i in 0..rows {
                let (_, d1, d2, d3) = self.activation.eval3(cur.u_val[i]);
                let ug = i * d;
                let uh = i * dd;
                let mut uv = cur.a_val[i] * d1;
                for a in 0..d {
                    uv += cur.a_grad[ug + a] * d2 * cur.u_grad[ug + a];
                }
                for a in 0..d {
                    let ga = cur.u_grad[ug + a];
                    for b in 0..d {
                        let hb = cur.a_hess[uh + a * d + b];
                        uv += hb * (d3 * ga * cur.u_grad[ug + b] + d2 * cur.u_hess[uh + a * d + b]);
                    }
                }
                // grad adjoint into scratch before hess rows are overwritten
                for a in 0..d {
                    let mut sym = 0.0;
                    for b in 0..d {
                        sym += (cur.a_hess[uh + a * d + b] + cur.a_hess[uh + b * d + a])
                            * cur.u_grad[ug + b];
                    }
                    ws.scratch[a] = cur.a_grad[ug + a] * d1 + d2 * sym;
                }
                for t in 0..dd {
                    cur.a_hess[uh + t] *= d1;
                }
                cur.a_grad[ug..ug + d].copy_from_slice(&ws.scratch[..d]);
                cur.a_val[i] = uv;
            }

            // linear backward
            if l == 0 {
                for i in 0..rows {
                    let uv = cur.a_val[i];
                    grad_acc[g_off + i] += uv;
                    let wb = w_off + i * cols;
                    for k in 0..cols {
                        grad_acc[wb + k] += uv * ws.x[k] + cur.a_grad[i * d + k];
                    }
                }
            } else {
                let prev = &mut before[l - 1];
                let w = &self.params[w_off..w_off + rows * cols];
                for i in 0..rows {
                    let uv = cur.a_val[i];
                    grad_acc[g_off + i] += uv;
                    let wrow = &w[i * cols..(i + 1) * cols];
                    let agrow = &cur.a_grad[i * d..(i + 1) * d];
                    let ahrow = &cur.a_hess[i * dd..(i + 1) * dd];
                    for k in 0..cols {
                        let mut s = uv * prev.h_val[k];
                        let pg = &prev.h_grad[k * d..(k + 1) * d];
                        for (a, p) in agrow.iter().zip(pg.iter()) {
                            s += a * p;
                        }
                        let ph = &prev.h_hess[k * dd..(k + 1) * dd];
                        for (a, p) in ahrow.iter().zip(ph.iter()) {
                            s += a * p;
                        }
                        grad_acc[w_off + i * cols + k] += s;

                        let cw = wrow[k];
                        prev.a_val[k] += cw * uv;
                        let pag = &mut prev.a_grad[k * d..(k + 1) * d];
                        for (pa, a) in pag.iter_mut().zip(agrow.iter()) {
                            *pa += cw * a;
                        }
                        let pah = &mut prev.a_hess[k * dd..(k + 1) * dd];
                        for (pa, a) in pah.iter_mut().zip(ahrow.iter()) {
                            *pa += cw * a;
                        }
                    }
                }
            }
        }
    }

    /// Value-only reverse pass: accumulates `upstream * d(value)/d(theta)`.
    /// Must follow an [`FeedForward::eval`] (any order) on the same input.
    pub fn backward0(&self, upstream: f64, ws: &mut NetWorkspace, grad_acc: &mut [f64]) {
        let n_layers = self.widths.len();
        let top_w = *self.widths.last().unwrap();
        let c = &self.params[self.c_off..self.c_off + top_w];

        for (l, buf) in ws.layers.iter_mut().enumerate() {
            buf.a_val[..self.widths[l]].fill(0.0);
        }
        {
            let top = &mut ws.layers[n_layers - 1];
            for i in 0..top_w {
                top.a_val[i] = c[i] * upstream;
                grad_acc[self.c_off + i] += upstream * top.h_val[i];
            }
        }
        for l in (0..n_layers).rev() {
            let (rows, cols) = self.layer_dims(l);
            let (w_off, g_off) = self.layer_off[l];
            let (before, rest) = ws.layers.split_at_mut(l);
            let cur = &mut rest[0];
            if self.resnet && l >= 2 {
                let src = &mut before[l - 2];
                for k in 0..self.widths[l - 2] {
                    src.a_val[k] += cur.a_val[k];
                }
            }
            for i in 0..rows {
                cur.a_val[i] *= self.activation.eval1(cur.u_val[i]).1;
            }
            if l == 0 {
                for i in 0..rows {
                    let uv = cur.a_val[i];
                    grad_acc[g_off + i] += uv;
                    let wbar = &mut grad_acc[w_off + i * cols..w_off + (i + 1) * cols];
                    for (g, xk) in wbar.iter_mut().zip(ws.x.iter()) {
                        *g += uv * xk;
                    }
                }
            } else {
                let prev = &mut before[l - 1];
                let w = &self.params[w_off..w_off + rows * cols];
                for i in 0..rows {
                    let uv = cur.a_val[i];
                    grad_acc[g_off + i] += uv;
                    let wrow = &w[i * cols..(i + 1) * cols];
                    let wbar = &mut grad_acc[w_off + i * cols..w_off + (i + 1) * cols];
                    for (((g, hv), av), wv) in wbar
                        .iter_mut()
                        .zip(prev.h_val.iter())
                        .zip(prev.a_val.iter_mut())
                        .zip(wrow.iter())
                    {
                        *g += uv * hv;
                        *av += wv * uv;
                    }
                }
            }
        }
    }
}
