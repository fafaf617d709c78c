//! Stationary Fokker-Planck operators assembled from drift and diffusion
//! coefficients.
//!
//! The residual of a density `q` at a point is organized as
//! `L*q = c0 q + c1 . grad q + <C2, hess q>` where the coefficient triple
//! comes from expanding
//! `-div(a q) + (1/2) sum_ij d_i d_j (B_ij q)`:
//!
//! - `c0 = -div a + (1/2) sum_ij d_i d_j B_ij`
//! - `c1_k = -a_k + (1/2) sum_i (d_i B_ik + d_i B_ki)`
//! - `C2 = (1/2) B`
//!
//! Coefficients depend only on the (fixed) coefficient models, never on the
//! density parameters, which is what makes the per-point precompute in the
//! solver legal.

use std::cell::RefCell;

use crate::error::{CoreError, Result};
use crate::fields::{DiffusionField, VectorField};
use crate::linalg::Mat;
use crate::nn::{NetWorkspace, Network};

/// Coefficient triple of the expanded operator at one point.
#[derive(Clone, Debug)]
pub struct PdeCoeffs {
    pub c0: f64,
    pub c1: Vec<f64>,
    pub c2: Mat,
}

impl PdeCoeffs {
    pub fn zeros(d: usize) -> Self {
        PdeCoeffs {
            c0: 0.0,
            c1: vec![0.0; d],
            c2: Mat::zeros(d, d),
        }
    }

    /// Apply the triple to an evaluated `(value, grad, hess)`.
    pub fn apply(&self, value: f64, grad: &[f64], hess: &[f64]) -> f64 {
        let d = self.c1.len();
        let mut r = self.c0 * value;
        for k in 0..d {
            r += self.c1[k] * grad[k];
        }
        let c2 = self.c2.data();
        for t in 0..d * d {
            r += c2[t] * hess[t];
        }
        r
    }
}

/// Anything that can produce operator coefficients at a point.
pub trait FpOperatorOps: Send + Sync {
    fn dim(&self) -> usize;
    fn coeffs_into(&self, x: &[f64], out: &mut PdeCoeffs);
    /// The second-order coefficient matrix when it does not depend on `x`.
    fn constant_second_order(&self) -> Option<Mat> {
        None
    }

    fn coeffs(&self, x: &[f64]) -> PdeCoeffs {
        let mut out = PdeCoeffs::zeros(self.dim());
        self.coeffs_into(x, &mut out);
        out
    }
}

thread_local! {
    static TL_OP_BUFS: RefCell<(Vec<f64>, Mat, Vec<f64>)> =
        RefCell::new((Vec::new(), Mat::zeros(0, 0), Vec::new()));
}

/// General-form operator from a square drift field and a diffusion tensor
/// field.
pub struct FpOperator {
    drift: Box<dyn VectorField>,
    diffusion: Box<dyn DiffusionField>,
}

impl FpOperator {
    pub fn new(drift: Box<dyn VectorField>, diffusion: Box<dyn DiffusionField>) -> Result<Self> {
        if drift.dim_in() != drift.dim_out() {
            return Err(CoreError::contract(
                "FpOperator: drift must map R^d to R^d",
            ));
        }
        if diffusion.dim() != drift.dim_in() {
            return Err(CoreError::contract(format!(
                "FpOperator: diffusion dimension {} does not match drift dimension {}",
                diffusion.dim(),
                drift.dim_in()
            )));
        }
        Ok(FpOperator { drift, diffusion })
    }

    pub fn drift(&self) -> &dyn VectorField {
        self.drift.as_ref()
    }

    pub fn diffusion(&self) -> &dyn DiffusionField {
        self.diffusion.as_ref()
    }
}

impl FpOperatorOps for FpOperator {
    fn dim(&self) -> usize {
        self.drift.dim_in()
    }

    fn coeffs_into(&self, x: &[f64], out: &mut PdeCoeffs) {
        let d = self.dim();
        TL_OP_BUFS.with(|bufs| {
            let bufs = &mut *bufs.borrow_mut();
            let (a, jac, grad) = (&mut bufs.0, &mut bufs.1, &mut bufs.2);
            a.resize(d, 0.0);
            grad.resize(d, 0.0);
            if jac.rows() != d {
                *jac = Mat::zeros(d, d);
            }
            self.drift.eval_into(x, a);
            self.drift.jacobian_into(x, jac);
            let mut div = 0.0;
            for k in 0..d {
                div += jac[(k, k)];
                out.c1[k] = -a[k];
            }
            out.c0 = -div;
            self.diffusion.eval_into(x, &mut out.c2);
            if !self.diffusion.is_constant() {
                for i in 0..d {
                    for j in 0..d {
                        self.diffusion.entry_grad_into(x, i, j, grad);
                        out.c0 += 0.5 * self.diffusion.entry_second(x, i, j);
                        out.c1[j] += 0.5 * grad[i];
                        out.c1[i] += 0.5 * grad[j];
                    }
                }
            }
            for v in out.c2.data_mut() {
                *v *= 0.5;
            }
        });
    }

    fn constant_second_order(&self) -> Option<Mat> {
        self.diffusion.constant_matrix().map(|mut b| {
            for v in b.data_mut() {
                *v *= 0.5;
            }
            b
        })
    }
}

/// Operator for the transformed Langevin chain over `(v, d)` coordinates.
///
/// The drift field maps the `(2M-1)`-dimensional transformed state to the
/// full `2M`-dimensional `(dv/dt, dr/dt)` drift. `b_diag` is the diagonal of
/// the (constant) diffusion tensor in `(v, r)` coordinates; only the velocity
/// block is nonzero for true Langevin dynamics, but estimated values may
/// carry tiny displacement entries, which the difference-operator terms
/// propagate exactly as written.
pub struct LangevinFpOperator {
    drift: Box<dyn VectorField>,
    b_diag: Vec<f64>,
    n_particles: usize,
    c2: Mat,
}

impl LangevinFpOperator {
    pub fn new(drift: Box<dyn VectorField>, b_diag: Vec<f64>, n_particles: usize) -> Result<Self> {
        let m = n_particles;
        if m < 3 {
            return Err(CoreError::contract("LangevinFpOperator: need M >= 3"));
        }
        if drift.dim_in() != 2 * m - 1 || drift.dim_out() != 2 * m {
            return Err(CoreError::contract(format!(
                "LangevinFpOperator: drift must map R^{} to R^{} for M = {m}, got {} -> {}",
                2 * m - 1,
                2 * m,
                drift.dim_in(),
                drift.dim_out()
            )));
        }
        if b_diag.len() != 2 * m {
            return Err(CoreError::contract(format!(
                "LangevinFpOperator: b_diag must have 2M = {} entries",
                2 * m
            )));
        }
        if b_diag.iter().any(|&v| v < 0.0) {
            return Err(CoreError::contract(
                "LangevinFpOperator: diffusion diagonal entries must be >= 0",
            ));
        }
        let dim = 2 * m - 1;
        let mut c2 = Mat::zeros(dim, dim);
        // velocity Laplacian block
        for k in 0..m {
            c2[(k, k)] = 0.5 * b_diag[k];
        }
        // displacement block: d/dd_1^2, (d/dd_k - d/dd_{k-1})^2 for
        // k = 2..M-1, d/dd_{M-1}^2 (indices as printed, 1-based)
        c2[(m, m)] += 0.5 * b_diag[m];
        for k in 2..m {
            let v = 0.5 * b_diag[m + k - 1];
            let hi = m + k - 1; // coordinate of d_k
            let lo = m + k - 2; // coordinate of d_{k-1}
            c2[(hi, hi)] += v;
            c2[(lo, lo)] += v;
            c2[(hi, lo)] -= v;
            c2[(lo, hi)] -= v;
        }
        c2[(m + m - 2, m + m - 2)] += 0.5 * b_diag[2 * m - 1];
        Ok(LangevinFpOperator {
            drift,
            b_diag,
            n_particles,
            c2,
        })
    }

    pub fn b_diag(&self) -> &[f64] {
        &self.b_diag
    }
}

impl FpOperatorOps for LangevinFpOperator {
    fn dim(&self) -> usize {
        2 * self.n_particles - 1
    }

    fn coeffs_into(&self, x: &[f64], out: &mut PdeCoeffs) {
        let m = self.n_particles;
        let dim = 2 * m - 1;
        TL_OP_BUFS.with(|bufs| {
            let bufs = &mut *bufs.borrow_mut();
            let (a, jac, _) = (&mut bufs.0, &mut bufs.1, &mut bufs.2);
            a.resize(2 * m, 0.0);
            if jac.rows() != 2 * m || jac.cols() != dim {
                *jac = Mat::zeros(2 * m, dim);
            }
            self.drift.eval_into(x, a);
            self.drift.jacobian_into(x, jac);
            let mut c0 = 0.0;
            for k in 0..m {
                c0 -= jac[(k, k)];
                out.c1[k] = -a[k];
            }
            for j in 0..m - 1 {
                c0 -= jac[(m + j + 1, m + j)] - jac[(m + j, m + j)];
                out.c1[m + j] = -(a[m + j + 1] - a[m + j]);
            }
            out.c0 = c0;
            out.c2.data_mut().copy_from_slice(self.c2.data());
        });
    }

    fn constant_second_order(&self) -> Option<Mat> {
        Some(self.c2.clone())
    }
}

/// Transformed-chain operator from a fitted drift and a diffusion diagonal.
pub fn build_langevin_fp_operator(
    drift: Box<dyn VectorField>,
    b_diag: Vec<f64>,
    n_particles: usize,
) -> Result<LangevinFpOperator> {
    LangevinFpOperator::new(drift, b_diag, n_particles)
}

/// Residual of the estimated operator applied to a density network at `x`.
pub fn fp_residual(op: &dyn FpOperatorOps, density: &Network, x: &[f64]) -> Result<f64> {
    density.hessian_method().map_err(|e| {
        CoreError::capability(format!("fp_residual: density network rejected: {e}"))
    })?;
    if density.input_dim() != op.dim() {
        return Err(CoreError::contract(format!(
            "fp_residual: density input dimension {} does not match operator dimension {}",
            density.input_dim(),
            op.dim()
        )));
    }
    let mut ws = NetWorkspace::new();
    let d = op.dim();
    let v = density.eval(x, 2, &mut ws);
    let coeffs = op.coeffs(x);
    Ok(coeffs.apply(v, &ws.out_grad[..d], &ws.out_hess[..d * d]))
}
