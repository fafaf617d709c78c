//! Gauss-Legendre quadrature: 1-D rules by Newton iteration on Legendre
//! polynomials, and tensor-product grids over box domains.

use crate::error::{CoreError, Result};
use crate::sde::DomainBox;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x.abs();
        nodes[n - 1 - i] = x.abs();
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product Gauss-Legendre rule on a box: `n_per_dim^d` nodes
/// (row-major points) and weights summing to the box volume. Exceeding
/// `budget` total nodes is an error directing the caller to Monte Carlo.
pub fn gauss_legendre_nodes(
    domain: &DomainBox,
    n_per_dim: usize,
    budget: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_per_dim < 1 {
        return Err(CoreError::contract("gauss_legendre_nodes: n_per_dim >= 1"));
    }
    let d = domain.dim();
    let total = n_per_dim.checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > budget {
        return Err(CoreError::contract(format!(
            "gauss_legendre_nodes: {n_per_dim}^{d} = {total} nodes exceeds budget {budget}; \
             use the Monte Carlo integrator for this dimension"
        )));
    }
    let (n1, w1) = gauss_legendre_1d(n_per_dim);
    // per-axis affine map to [lower, upper]
    let mut axis_nodes = Vec::with_capacity(d);
    let mut axis_weights = Vec::with_capacity(d);
    for k in 0..d {
        let half = 0.5 * domain.side(k);
        let mid = 0.5 * (domain.lower()[k] + domain.upper()[k]);
        axis_nodes.push(n1.iter().map(|&t| mid + half * t).collect::<Vec<_>>());
        axis_weights.push(w1.iter().map(|&w| w * half).collect::<Vec<_>>());
    }
    let mut points = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            points.push(axis_nodes[k][idx[k]]);
            w *= axis_weights[k][idx[k]];
        }
        weights.push(w);
        // odometer increment
        let mut k = d;
        loop {
            if k == 0 {
                return Ok((points, weights));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n_per_dim {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional_rule_integrates_polynomials_exactly() {
        // n nodes are exact through degree 2n-1
        for n in 1..=8usize {
            let (x, w) = gauss_legendre_1d(n);
            for deg in 0..=(2 * n - 1) {
                let got: f64 = x
                    .iter()
                    .zip(w.iter())
                    .map(|(&xi, &wi)| wi * xi.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert_relative_eq!(got, exact, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn tensor_rule_weights_sum_to_volume() {
        let b = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
        let (_, w) = gauss_legendre_nodes(&b, 20, 1_000_000).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 96.0, max_relative = 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn x_squared_on_unit_interval_with_two_nodes() {
        let b = DomainBox::new(vec![0.0], vec![1.0]).unwrap();
        let (x, w) = gauss_legendre_nodes(&b, 2, 100).unwrap();
        let got: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi * xi).sum();
        assert_relative_eq!(got, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn budget_error_directs_to_monte_carlo() {
        let b = DomainBox::new(vec![0.0; 7], vec![1.0; 7]).unwrap();
        let err = gauss_legendre_nodes(&b, 100, 1_000_000).unwrap_err();
        assert!(err.to_string().contains("Monte Carlo"), "{err}");
    }
}
