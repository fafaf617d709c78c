//! The three-term least-squares loss: interior PDE residual, normalization
//! penalty, and artificial-boundary penalty.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::fp::operator::{FpOperatorOps, PdeCoeffs};
use crate::fp::sampling;
use crate::nn::{NetWorkspace, Network};
use crate::parallel;
use crate::regression::metrics::{integration_nodes, Integrator};
use crate::rng::rng_from_seed;
use crate::sde::DomainBox;

thread_local! {
    pub(crate) static TL_WS: RefCell<NetWorkspace> = RefCell::new(NetWorkspace::new());
    pub(crate) static TL_COEFFS: RefCell<Option<PdeCoeffs>> = const { RefCell::new(None) };
    pub(crate) static TL_ADJ: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Node source for the interior residual term.
#[derive(Clone)]
pub enum InteriorSampler {
    /// Fresh uniform points in the box; `n` is the full-evaluation count.
    Uniform { n: usize, seed: u64 },
    /// The available data points restricted to the box (weighted
    /// `L2(Omega, pi~)` norm); mini-batches subsample this pool.
    WeightedData { points: Arc<Vec<f64>>, dim: usize, seed: u64 },
}

impl InteriorSampler {
    /// Build the weighted sampler from row-major points, keeping only those
    /// inside the domain. Zero in-domain points is an error.
    pub fn weighted_from_rows(
        rows: &[f64],
        dim: usize,
        domain: &DomainBox,
        seed: u64,
    ) -> Result<Self> {
        if dim != domain.dim() {
            return Err(CoreError::contract(
                "weighted sampler: point dimension does not match domain",
            ));
        }
        let mut kept = Vec::new();
        for row in rows.chunks_exact(dim) {
            if domain.contains(row) {
                kept.extend_from_slice(row);
            }
        }
        if kept.is_empty() {
            return Err(CoreError::contract(
                "weighted sampler: no data points inside the domain",
            ));
        }
        Ok(InteriorSampler::WeightedData {
            points: Arc::new(kept),
            dim,
            seed,
        })
    }

    pub fn n_points(&self) -> usize {
        match self {
            InteriorSampler::Uniform { n, .. } => *n,
            InteriorSampler::WeightedData { points, dim, .. } => points.len() / dim,
        }
    }
}

/// Loss weights and samplers.
#[derive(Clone)]
pub struct LossConfig {
    /// Normalization weight; must be positive or the zero function minimizes
    /// the loss.
    pub lambda1: f64,
    /// Boundary weight; zero disables the boundary term.
    pub lambda2: f64,
    pub interior: InteriorSampler,
    /// Fixed node set for the normalization integral.
    pub normalization: Integrator,
    /// Boundary sample count for full evaluations.
    pub boundary_n: usize,
    pub boundary_seed: u64,
    /// Per-step mini-batch sizes for training.
    pub interior_batch: usize,
    pub boundary_batch: usize,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) {
            return Err(CoreError::contract(
                "LossConfig: lambda1 must be > 0 (with lambda1 = 0 the zero function minimizes \
                 the loss)",
            ));
        }
        if self.lambda2 < 0.0 {
            return Err(CoreError::contract("LossConfig: lambda2 must be >= 0"));
        }
        if self.interior_batch == 0 {
            return Err(CoreError::contract("LossConfig: interior_batch must be >= 1"));
        }
        if self.lambda2 > 0.0 && (self.boundary_batch == 0 || self.boundary_n == 0) {
            return Err(CoreError::contract(
                "LossConfig: boundary term enabled but boundary sample counts are zero",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub interior: f64,
    pub normalization: f64,
    pub boundary: f64,
}

/// Residual of `density` under `op` at `x`, reusing thread-local scratch.
/// Leaves the order-2 forward state in the workspace for a backward pass.
pub(crate) fn residual_at(
    op: &dyn FpOperatorOps,
    density: &Network,
    x: &[f64],
    precomputed: Option<&PdeCoeffs>,
    ws: &mut NetWorkspace,
    coeffs_buf: &mut PdeCoeffs,
) -> f64 {
    let d = op.dim();
    let v = density.eval(x, 2, ws);
    match precomputed {
        Some(c) => c.apply(v, &ws.out_grad[..d], &ws.out_hess[..d * d]),
        None => {
            op.coeffs_into(x, coeffs_buf);
            coeffs_buf.apply(v, &ws.out_grad[..d], &ws.out_hess[..d * d])
        }
    }
}

/// Mean-square residual term over the configured interior sampler:
/// `(|Omega|/N1) sum |L*q(x_I)|^2` in uniform mode,
/// `(1/|X cap Omega|) sum |L*q(x^n)|^2` in weighted mode.
pub fn interior_term(
    op: &dyn FpOperatorOps,
    density: &Network,
    sampler: &InteriorSampler,
    domain: &DomainBox,
) -> Result<f64> {
    density.hessian_method()?;
    let d = op.dim();
    match sampler {
        InteriorSampler::Uniform { n, seed } => {
            if *n == 0 {
                return Err(CoreError::contract("interior_term: n must be >= 1"));
            }
            let pts = sampling::sample_uniform_box(domain, *n, *seed);
            let w = domain.volume() / *n as f64;
            Ok(parallel::indexed_sum(*n, |i| {
                let x = &pts[i * d..(i + 1) * d];
                let r = with_scratch(|ws, cb| residual_at(op, density, x, None, ws, cb), d);
                w * r * r
            }))
        }
        InteriorSampler::WeightedData { points, dim, .. } => {
            let n = points.len() / dim;
            let w = 1.0 / n as f64;
            Ok(parallel::indexed_sum(n, |i| {
                let x = &points[i * dim..(i + 1) * dim];
                let r = with_scratch(|ws, cb| residual_at(op, density, x, None, ws, cb), d);
                w * r * r
            }))
        }
    }
}

fn with_scratch<R>(f: impl FnOnce(&mut NetWorkspace, &mut PdeCoeffs) -> R, dim: usize) -> R {
    TL_WS.with(|ws| {
        TL_COEFFS.with(|cf| {
            let mut ws = ws.borrow_mut();
            let mut cf = cf.borrow_mut();
            let needs_new = cf.as_ref().map(|c| c.c1.len() != dim).unwrap_or(true);
            if needs_new {
                *cf = Some(PdeCoeffs::zeros(dim));
            }
            f(&mut ws, cf.as_mut().unwrap())
        })
    })
}

/// `| sum_i w_i q(x_i) - 1 |^2` over the integrator's node set.
pub fn normalization_term(
    density: &Network,
    domain: &DomainBox,
    integrator: &Integrator,
) -> Result<f64> {
    let (mass, _) = density_mass(density, domain, integrator)?;
    Ok((mass - 1.0) * (mass - 1.0))
}

/// Estimated `int_Omega q` and node count.
pub fn density_mass(
    density: &Network,
    domain: &DomainBox,
    integrator: &Integrator,
) -> Result<(f64, usize)> {
    let (pts, w) = integration_nodes(domain, integrator)?;
    let d = domain.dim();
    let n = w.len();
    let mass = parallel::indexed_sum(n, |i| {
        let x = &pts[i * d..(i + 1) * d];
        TL_WS.with(|ws| w[i] * density.eval(x, 0, &mut ws.borrow_mut()))
    });
    Ok((mass, n))
}

/// `(|dOmega|/N3) sum |q(x_III)|^2` over fresh uniform boundary points.
pub fn boundary_term(
    density: &Network,
    domain: &DomainBox,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::contract("boundary_term: n must be >= 1"));
    }
    let pts = sampling::sample_uniform_boundary(domain, n, seed);
    let d = domain.dim();
    let w = domain.boundary_measure() / n as f64;
    Ok(parallel::indexed_sum(n, |i| {
        let x = &pts[i * d..(i + 1) * d];
        TL_WS.with(|ws| {
            let v = density.eval(x, 0, &mut ws.borrow_mut());
            w * v * v
        })
    }))
}

/// Full three-term loss `interior + lambda1 * normalization + lambda2 *
/// boundary` with its breakdown.
pub fn empirical_loss(
    op: &dyn FpOperatorOps,
    density: &Network,
    cfg: &LossConfig,
    domain: &DomainBox,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let interior = interior_term(op, density, &cfg.interior, domain)?;
    let normalization = normalization_term(density, domain, &cfg.normalization)?;
    let boundary = if cfg.lambda2 > 0.0 {
        boundary_term(density, domain, cfg.boundary_n, cfg.boundary_seed)?
    } else {
        0.0
    };
    Ok(LossBreakdown {
        total: interior + cfg.lambda1 * normalization + cfg.lambda2 * boundary,
        interior,
        normalization,
        boundary,
    })
}

/// Split row-major points into train/test by a seeded shuffle; `fraction` is
/// the train share.
pub fn split_rows(
    rows: &[f64],
    dim: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let n = rows.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * fraction).round() as usize;
    let mut train = Vec::with_capacity(n_train * dim);
    let mut test = Vec::with_capacity((n - n_train) * dim);
    for (pos, &idx) in order.iter().enumerate() {
        let row = &rows[idx * dim..(idx + 1) * dim];
        if pos < n_train {
            train.extend_from_slice(row);
        } else {
            test.extend_from_slice(row);
        }
    }
    (train, test)
}
