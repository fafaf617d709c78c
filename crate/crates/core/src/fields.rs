//! Abstractions over drift and diffusion coefficients.
//!
//! The stationary-density solver only ever needs coefficient *values* and a
//! few of their spatial derivatives; these traits let analytic benchmark
//! coefficients and trained network coefficients plug into the same operator
//! assembly.

use crate::linalg::Mat;

/// A vector field `f: R^{dim_in} -> R^{dim_out}` with a Jacobian.
pub trait VectorField: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
    /// `out[(k, j)] = d f_k / d x_j`.
    fn jacobian_into(&self, x: &[f64], out: &mut Mat);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.eval_into(x, &mut out);
        out
    }

    /// Trace of the Jacobian; only meaningful for square fields.
    fn divergence(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.dim_in(), self.dim_out());
        let mut j = Mat::zeros(self.dim_out(), self.dim_in());
        self.jacobian_into(x, &mut j);
        (0..self.dim_in()).map(|k| j[(k, k)]).sum()
    }
}

/// A symmetric matrix field `B: R^d -> R^{d x d}` (a diffusion tensor
/// `b b^T` or its estimate) with the entry derivatives the Fokker-Planck
/// operator expansion needs.
pub trait DiffusionField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut Mat);
    /// True when the field does not depend on `x`; all entry derivatives are
    /// then identically zero and the operator takes a cheaper path.
    fn is_constant(&self) -> bool;
    /// For constant fields, the matrix itself.
    fn constant_matrix(&self) -> Option<Mat> {
        None
    }
    /// `out = grad B_ij (x)`.
    fn entry_grad_into(&self, x: &[f64], i: usize, j: usize, out: &mut [f64]);
    /// The mixed second partial `d^2 B_ij / dx_i dx_j` at `x`.
    fn entry_second(&self, x: &[f64], i: usize, j: usize) -> f64;

    fn eval(&self, x: &[f64]) -> Mat {
        let mut out = Mat::zeros(self.dim(), self.dim());
        self.eval_into(x, &mut out);
        out
    }
}

/// Analytic vector field built from closures; benchmarks use this to expose
/// exact coefficients.
pub struct AnalyticVectorField<F, J>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64], &mut Mat) + Send + Sync,
{
    pub dim_in: usize,
    pub dim_out: usize,
    pub f: F,
    pub jac: J,
}

impl<F, J> VectorField for AnalyticVectorField<F, J>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64], &mut Mat) + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
    fn jacobian_into(&self, x: &[f64], out: &mut Mat) {
        (self.jac)(x, out)
    }
}
