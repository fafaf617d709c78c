//! Two-dimensional benchmark SDE whose stationary law is a bivariate
//! Student's t distribution with closed-form density.

use std::sync::Arc;

use crate::fields::{DiffusionField, VectorField};
use crate::linalg::Mat;
use crate::sde::{SdeModel, TrueDensity};

/// `phi(x1, x2) = 1 + (2/15)(4 x1^2 - x1 x2 + x2^2)`.
pub fn student_phi(x1: f64, x2: f64) -> f64 {
    1.0 + (2.0 / 15.0) * (4.0 * x1 * x1 - x1 * x2 + x2 * x2)
}

fn student_phi_grad(x1: f64, x2: f64) -> (f64, f64) {
    ((2.0 / 15.0) * (8.0 * x1 - x2), (2.0 / 15.0) * (2.0 * x2 - x1))
}

// second partials of phi are constant
const PHI_H11: f64 = 16.0 / 15.0;
const PHI_H12: f64 = -2.0 / 15.0;
const PHI_H22: f64 = 4.0 / 15.0;

/// `b b^T = phi(x) * B0`.
fn b0() -> Mat {
    Mat::from_rows(&[&[1.0, -1.375], &[-1.375, 5.875]])
}

/// Normalized stationary density `p = 2 / (pi sqrt(15)) * phi^{-3}`.
pub fn student_true_density(x: &[f64]) -> f64 {
    let c = 2.0 / (std::f64::consts::PI * 15.0_f64.sqrt());
    c * student_phi(x[0], x[1]).powi(-3)
}

/// Mean and covariance of the stationary law.
pub fn student_true_moments() -> (Vec<f64>, Mat) {
    (
        vec![0.0, 0.0],
        Mat::from_rows(&[&[1.0, 0.5], &[0.5, 4.0]]),
    )
}

pub fn student_t_model() -> SdeModel {
    let drift = Arc::new(|x: &[f64], out: &mut [f64]| {
        out[0] = -1.5 * x[0] + x[1];
        out[1] = 0.25 * x[0] - 1.5 * x[1];
    });
    let diffusion = Arc::new(|x: &[f64], out: &mut Mat| {
        let s = student_phi(x[0], x[1]).sqrt();
        out[(0, 0)] = s;
        out[(0, 1)] = 0.0;
        out[(1, 0)] = -11.0 / 8.0 * s;
        out[(1, 1)] = 255.0_f64.sqrt() / 8.0 * s;
    });
    SdeModel::new(2, 2, drift, diffusion)
        .with_true_density(TrueDensity::new(true, Arc::new(student_true_density)))
}

/// Analytic drift field with its (constant) Jacobian.
pub struct StudentDrift;

impl VectorField for StudentDrift {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -1.5 * x[0] + x[1];
        out[1] = 0.25 * x[0] - 1.5 * x[1];
    }
    fn jacobian_into(&self, _x: &[f64], out: &mut Mat) {
        out[(0, 0)] = -1.5;
        out[(0, 1)] = 1.0;
        out[(1, 0)] = 0.25;
        out[(1, 1)] = -1.5;
    }
}

/// Analytic diffusion tensor `B(x) = phi(x) B0` with exact entry derivatives.
pub struct StudentDiffusion {
    b0: Mat,
}

impl StudentDiffusion {
    pub fn new() -> Self {
        StudentDiffusion { b0: b0() }
    }
}

impl Default for StudentDiffusion {
    fn default() -> Self {
        Self::new()
    }
}

impl DiffusionField for StudentDiffusion {
    fn dim(&self) -> usize {
        2
    }
    fn eval_into(&self, x: &[f64], out: &mut Mat) {
        let phi = student_phi(x[0], x[1]);
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] = phi * self.b0[(i, j)];
            }
        }
    }
    fn is_constant(&self) -> bool {
        false
    }
    fn entry_grad_into(&self, x: &[f64], i: usize, j: usize, out: &mut [f64]) {
        let (g1, g2) = student_phi_grad(x[0], x[1]);
        out[0] = self.b0[(i, j)] * g1;
        out[1] = self.b0[(i, j)] * g2;
    }
    fn entry_second(&self, _x: &[f64], i: usize, j: usize) -> f64 {
        let phi_ij = match (i, j) {
            (0, 0) => PHI_H11,
            (1, 1) => PHI_H22,
            _ => PHI_H12,
        };
        self.b0[(i, j)] * phi_ij
    }
}
