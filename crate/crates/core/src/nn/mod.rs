//! Neural-network function approximators with the derivative surface the
//! Fokker-Planck solver needs: values, parameter gradients, input gradients,
//! and input Hessians.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod feedforward;
pub mod two_layer;

pub use activation::Activation;
pub use adam::Adam;
pub use feedforward::FeedForward;
pub use two_layer::TwoLayerRelu3;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::rng::rng_from_seed;

/// Per-layer forward state and adjoints; reused across evaluations.
#[derive(Default, Clone)]
pub(crate) struct LayerBufs {
    pub u_val: Vec<f64>,
    pub u_grad: Vec<f64>,
    pub u_hess: Vec<f64>,
    pub h_val: Vec<f64>,
    pub h_grad: Vec<f64>,
    pub h_hess: Vec<f64>,
    pub a_val: Vec<f64>,
    pub a_grad: Vec<f64>,
    pub a_hess: Vec<f64>,
}

/// Scratch space for network evaluation and backpropagation. Allocate one
/// per worker and reuse; `ensure_*` reshapes lazily when the network or
/// derivative order changes.
#[derive(Default)]
pub struct NetWorkspace {
    pub(crate) x: Vec<f64>,
    pub(crate) layers: Vec<LayerBufs>,
    pub(crate) z: Vec<f64>,
    pub out_grad: Vec<f64>,
    pub out_hess: Vec<f64>,
    pub(crate) scratch: Vec<f64>,
    pub(crate) order: usize,
    pub(crate) clipped: bool,
    alloc_order: usize,
    shape_key: u64,
}

impl NetWorkspace {
    pub fn new() -> Self {
        NetWorkspace::default()
    }

    fn key(parts: &[usize]) -> u64 {
        let mut k: u64 = 0xcbf2_9ce4_8422_2325;
        for &p in parts {
            k ^= p as u64;
            k = k.wrapping_mul(0x1000_0000_01b3);
        }
        k.max(1)
    }

    pub(crate) fn ensure_feedforward(&mut self, net: &FeedForward, order: usize) {
        let mut parts = vec![1usize, net.input_dim];
        parts.extend_from_slice(&net.widths);
        let key = Self::key(&parts);
        if key == self.shape_key && order <= self.alloc_order {
            return;
        }
        let d = net.input_dim;
        let dd = d * d;
        self.x = vec![0.0; d];
        self.layers = net
            .widths
            .iter()
            .map(|&w| {
                let mut b = LayerBufs::default();
                b.u_val = vec![0.0; w];
                b.h_val = vec![0.0; w];
                b.a_val = vec![0.0; w];
                if order >= 1 {
                    b.u_grad = vec![0.0; w * d];
                    b.h_grad = vec![0.0; w * d];
                    b.a_grad = vec![0.0; w * d];
                }
                if order >= 2 {
                    b.u_hess = vec![0.0; w * dd];
                    b.h_hess = vec![0.0; w * dd];
                    b.a_hess = vec![0.0; w * dd];
                }
                b
            })
            .collect();
        self.out_grad = vec![0.0; d];
        self.out_hess = vec![0.0; dd];
        self.scratch = vec![0.0; d + net.widths.iter().copied().max().unwrap_or(1)];
        self.shape_key = key;
        self.alloc_order = order;
    }

    pub(crate) fn ensure_two_layer(&mut self, net: &TwoLayerRelu3, order: usize) {
        let key = Self::key(&[2usize, net.input_dim, net.neurons]);
        if key == self.shape_key {
            return;
        }
        let d = net.input_dim;
        self.x = vec![0.0; d];
        self.z = vec![0.0; net.neurons];
        self.out_grad = vec![0.0; d];
        self.out_hess = vec![0.0; d * d];
        self.scratch = vec![0.0; d];
        self.layers.clear();
        self.shape_key = key;
        self.alloc_order = order.max(2);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetBody {
    FeedForward(FeedForward),
    TwoLayer(TwoLayerRelu3),
}

/// How a network's input Hessian is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianMethod {
    /// Term-by-term closed form (two-layer ReLU^3).
    Analytic,
    /// Forward propagation of (value, gradient, Hessian) through the layers
    /// with a matching reverse pass.
    ForwardOverReverse,
}

impl HessianMethod {
    pub fn name(self) -> &'static str {
        match self {
            HessianMethod::Analytic => "analytic",
            HessianMethod::ForwardOverReverse => "forward-over-reverse",
        }
    }
}

/// Initialization scheme for network parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Weights uniform in `(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero.
    HeUniform,
    /// Every parameter uniform in `(-r, r)`.
    Uniform(f64),
}

impl InitScheme {
    pub fn name(&self) -> String {
        match self {
            InitScheme::HeUniform => "he-uniform".to_string(),
            InitScheme::Uniform(r) => format!("uniform({r})"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkMeta {
    pub seed: Option<u64>,
    pub init_scheme: Option<String>,
}

/// A scalar-output network: an architecture body, an optional output clip
/// bound, and provenance metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub body: NetBody,
    /// Output bound `P`: forward is clamped to `[-P, P]` and all derivatives
    /// vanish where the unclipped value lies outside.
    pub clip: Option<f64>,
    pub meta: NetworkMeta,
}

impl Network {
    pub fn feedforward(
        input_dim: usize,
        widths: Vec<usize>,
        activation: Activation,
        resnet: bool,
    ) -> Result<Self> {
        Ok(Network {
            body: NetBody::FeedForward(FeedForward::new(input_dim, widths, activation, resnet)?),
            clip: None,
            meta: NetworkMeta::default(),
        })
    }

    pub fn two_layer_relu3(input_dim: usize, neurons: usize, clamp: Option<f64>) -> Result<Self> {
        Ok(Network {
            body: NetBody::TwoLayer(TwoLayerRelu3::new(input_dim, neurons, clamp)?),
            clip: None,
            meta: NetworkMeta::default(),
        })
    }

    /// Wrap the output in `min(max(., -p), p)`; derivatives are zeroed in
    /// the clipped region.
    pub fn clip_output(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(CoreError::contract("clip_output: bound must be positive"));
        }
        self.clip = Some(p);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        match &self.body {
            NetBody::FeedForward(n) => n.input_dim(),
            NetBody::TwoLayer(n) => n.input_dim(),
        }
    }

    pub fn n_params(&self) -> usize {
        match &self.body {
            NetBody::FeedForward(n) => n.n_params(),
            NetBody::TwoLayer(n) => n.n_params(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match &self.body {
            NetBody::FeedForward(n) => n.params(),
            NetBody::TwoLayer(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.body {
            NetBody::FeedForward(n) => n.params_mut(),
            NetBody::TwoLayer(n) => n.params_mut(),
        }
    }

    pub fn activation(&self) -> Activation {
        match &self.body {
            NetBody::FeedForward(n) => n.activation(),
            NetBody::TwoLayer(_) => Activation::Relu3,
        }
    }

    pub fn param_block_name(&self, idx: usize) -> String {
        match &self.body {
            NetBody::FeedForward(n) => n.param_block_name(idx),
            NetBody::TwoLayer(n) => n.param_block_name(idx),
        }
    }

    /// How this architecture provides input Hessians for PDE residuals, or
    /// why it cannot.
    pub fn hessian_method(&self) -> Result<HessianMethod> {
        match &self.body {
            NetBody::TwoLayer(_) => Ok(HessianMethod::Analytic),
            NetBody::FeedForward(n) => {
                if n.activation().usable_for_second_order() {
                    Ok(HessianMethod::ForwardOverReverse)
                } else {
                    Err(CoreError::capability(
                        "ReLU network: the input Hessian is zero almost everywhere, which is \
                         unusable for a second-order PDE residual; use relu3, tanh, or mish \
                         for the density network",
                    ))
                }
            }
        }
    }

    /// Deterministic parameter initialization; records seed and scheme.
    pub fn init(mut self, seed: u64, scheme: InitScheme) -> Network {
        let mut rng = rng_from_seed(seed);
        match &mut self.body {
            NetBody::FeedForward(n) => {
                let widths = n.widths.clone();
                let input_dim = n.input_dim;
                let layer_off = n.layer_off.clone();
                let c_off = n.c_off;
                let params = n.params_mut();
                for (l, &(w_off, g_off)) in layer_off.iter().enumerate() {
                    let fan_in = if l == 0 { input_dim } else { widths[l - 1] };
                    let rows = widths[l];
                    match scheme {
                        InitScheme::HeUniform => {
                            let bound = (6.0 / fan_in as f64).sqrt();
                            for p in params[w_off..w_off + rows * fan_in].iter_mut() {
                                *p = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
                            }
                            for p in params[g_off..g_off + rows].iter_mut() {
                                *p = 0.0;
                            }
                        }
                        InitScheme::Uniform(r) => {
                            for p in params[w_off..g_off + rows].iter_mut() {
                                *p = (rng.gen::<f64>() * 2.0 - 1.0) * r;
                            }
                        }
                    }
                }
                let top = *widths.last().unwrap();
                let bound = match scheme {
                    InitScheme::HeUniform => (6.0 / top as f64).sqrt(),
                    InitScheme::Uniform(r) => r,
                };
                for p in params[c_off..c_off + top].iter_mut() {
                    *p = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
                }
            }
            NetBody::TwoLayer(n) => {
                let (m, d) = (n.neurons, n.input_dim);
                let params = n.params_mut();
                let (c_bound, w_bound) = match scheme {
                    InitScheme::HeUniform => ((6.0 / m as f64).sqrt(), (6.0 / d as f64).sqrt()),
                    InitScheme::Uniform(r) => (r, r),
                };
                for p in params[..m].iter_mut() {
                    *p = (rng.gen::<f64>() * 2.0 - 1.0) * c_bound;
                }
                for p in params[m..].iter_mut() {
                    *p = (rng.gen::<f64>() * 2.0 - 1.0) * w_bound;
                }
                n.clamp_parameters();
            }
        }
        self.meta = NetworkMeta {
            seed: Some(seed),
            init_scheme: Some(scheme.name()),
        };
        self
    }

    /// Forward value with workspace; stores state for a following backward
    /// call. `order` selects which input derivatives are carried (0, 1, 2).
    pub fn eval(&self, x: &[f64], order: usize, ws: &mut NetWorkspace) -> f64 {
        let raw = match &self.body {
            NetBody::FeedForward(n) => n.eval(x, order, ws),
            NetBody::TwoLayer(n) => n.eval(x, order, ws),
        };
        ws.clipped = false;
        if let Some(p) = self.clip {
            if raw.abs() > p {
                ws.clipped = true;
                let d = self.input_dim();
                if order >= 1 {
                    ws.out_grad[..d].fill(0.0);
                }
                if order >= 2 {
                    ws.out_hess[..d * d].fill(0.0);
                }
                return raw.clamp(-p, p);
            }
        }
        raw
    }

    /// Accumulate `upstream * d(value)/d(theta)`; must follow [`Network::eval`]
    /// on the same input.
    pub fn backward_value(&self, upstream: f64, ws: &mut NetWorkspace, grad_acc: &mut [f64]) {
        if ws.clipped {
            return;
        }
        match &self.body {
            NetBody::FeedForward(n) => n.backward0(upstream, ws, grad_acc),
            NetBody::TwoLayer(n) => n.backward0(upstream, ws, grad_acc),
        }
    }

    /// Accumulate the parameter gradient of `av*value + ag.grad + <ah, hess>`;
    /// must follow an order-2 [`Network::eval`] on the same input. `ah` is
    /// row-major `d x d`.
    pub fn backward_second_order(
        &self,
        av: f64,
        ag: &[f64],
        ah: &[f64],
        ws: &mut NetWorkspace,
        grad_acc: &mut [f64],
    ) {
        if ws.clipped {
            return;
        }
        match &self.body {
            NetBody::FeedForward(n) => n.backward2(av, ag, ah, ws, grad_acc),
            NetBody::TwoLayer(n) => n.backward2(av, ag, ah, ws, grad_acc),
        }
    }

    /// Convenience forward without a caller-managed workspace.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut ws = NetWorkspace::new();
        self.eval(x, 0, &mut ws)
    }

    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = NetWorkspace::new();
        self.eval(x, 1, &mut ws);
        ws.out_grad[..self.input_dim()].to_vec()
    }

    /// Input Hessian; for ReLU bodies this is the almost-everywhere value
    /// (identically zero). PDE-residual use is gated by
    /// [`Network::hessian_method`].
    pub fn input_hessian(&self, x: &[f64]) -> Mat {
        let mut ws = NetWorkspace::new();
        let d = self.input_dim();
        self.eval(x, 2, &mut ws);
        Mat::from_vec(d, d, ws.out_hess[..d * d].to_vec())
    }

    /// Parameter gradient of `upstream * value` via a fresh forward.
    pub fn param_gradient(&self, x: &[f64], upstream: f64) -> Vec<f64> {
        let mut ws = NetWorkspace::new();
        let mut grad = vec![0.0; self.n_params()];
        self.eval(x, 0, &mut ws);
        self.backward_value(upstream, &mut ws, &mut grad);
        grad
    }

    /// Re-apply the parameter bound, if any (two-layer bodies only).
    pub fn clamp_parameters(&mut self) {
        if let NetBody::TwoLayer(n) = &mut self.body {
            n.clamp_parameters();
        }
    }
}
