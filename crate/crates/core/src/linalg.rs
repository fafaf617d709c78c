//! Small dense matrices, a symmetric Jacobi eigensolver, and the PSD
//! projection / square-root helpers used to drive learned-chain noise.
//!
//! Dimensions here are tiny (state dimension of an SDE, at most a few tens),
//! so everything is plain row-major `Vec<f64>` with no blocking.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `out = self * x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            out[i] = acc;
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    pub fn symmetrized(&self) -> Mat {
        assert_eq!(self.rows, self.cols);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns,
/// so `A = V diag(w) V^T`. Eigenvalues come out in ascending order.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.rows() != a.cols() {
        return Err(CoreError::contract("sym_eigen: matrix must be square"));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return Ok((m.data.clone(), v));
    }

    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            return Ok(finish_eigen(m, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 / (n as f64) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rotate rows/columns p and q
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(CoreError::numerical(
        "sym_eigen: Jacobi sweeps did not converge",
    ))
}

fn finish_eigen(m: Mat, v: Mat) -> (Vec<f64>, Mat) {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let mut w = Vec::with_capacity(n);
    let mut vs = Mat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        w.push(vals[old]);
        for k in 0..n {
            vs[(k, new)] = v[(k, old)];
        }
    }
    (w, vs)
}

/// Reconstruct `V diag(f(w)) V^T`.
fn eigen_apply(w: &[f64], v: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let n = w.len();
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let fw = f(w[k]);
        if fw == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = v[(i, k)];
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += fw * vik * v[(j, k)];
            }
        }
    }
    out
}

/// Project a symmetric matrix onto the PSD cone by clamping negative
/// eigenvalues to zero.
///
/// The input must be symmetric within `1e-8 * ||B||_F`; anything worse is a
/// contract violation rather than something to silently average away.
pub fn psd_project(b: &Mat) -> Result<Mat> {
    if b.rows() != b.cols() {
        return Err(CoreError::contract("psd_project: matrix must be square"));
    }
    let tol = 1e-8 * b.frobenius_norm().max(f64::MIN_POSITIVE);
    if b.max_asymmetry() > tol {
        return Err(CoreError::contract(format!(
            "psd_project: input asymmetric beyond tolerance ({:.3e} > {:.3e})",
            b.max_asymmetry(),
            tol
        )));
    }
    let (w, v) = sym_eigen(b)?;
    Ok(eigen_apply(&w, &v, |x| x.max(0.0)))
}

/// Symmetric square root `U S^{1/2} U^T` of a (nearly) PSD matrix.
/// Eigenvalues below `1e-12` are clamped to zero before the root.
pub fn psd_sqrt(b: &Mat) -> Result<Mat> {
    let (w, v) = sym_eigen(b)?;
    Ok(eigen_apply(&w, &v, |x| if x < 1e-12 { 0.0 } else { x.sqrt() }))
}

/// Sum with a fixed-shape pairwise tree, independent of thread count or
/// chunking decisions made elsewhere. Used wherever a reduction must be
/// bit-reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
