//! Relative L2 error over a box domain, with Gauss or Monte Carlo nodes.

use crate::error::{CoreError, Result};
use crate::parallel;
use crate::quad;
use crate::rng;
use crate::sde::DomainBox;

/// Node source for domain integrals.
#[derive(Clone, Debug, PartialEq)]
pub enum Integrator {
    /// Tensor-product Gauss-Legendre with `n_per_dim` nodes per axis.
    Gauss { n_per_dim: usize },
    /// Uniform Monte Carlo with `n` points.
    Mc { n: usize, seed: u64 },
}

/// Sanity cap on tensor grids; past this the caller should switch to MC.
pub const GAUSS_NODE_BUDGET: usize = 4_000_000;

/// Materialize integration nodes (row-major) and weights for a box.
pub fn integration_nodes(domain: &DomainBox, integ: &Integrator) -> Result<(Vec<f64>, Vec<f64>)> {
    match integ {
        Integrator::Gauss { n_per_dim } => {
            quad::gauss_legendre_nodes(domain, *n_per_dim, GAUSS_NODE_BUDGET)
        }
        Integrator::Mc { n, seed } => {
            if *n == 0 {
                return Err(CoreError::contract("integration_nodes: n must be >= 1"));
            }
            let d = domain.dim();
            let mut rng = rng::rng_from_seed(*seed);
            let mut pts = vec![0.0; n * d];
            for i in 0..*n {
                rng::fill_uniform_box(
                    &mut rng,
                    domain.lower(),
                    domain.upper(),
                    &mut pts[i * d..(i + 1) * d],
                );
            }
            let w = domain.volume() / *n as f64;
            Ok((pts, vec![w; *n]))
        }
    }
}

/// `||f - f_hat||_{L2} / ||f||_{L2}` over the domain, both norms on the same
/// node set. Vector-valued functions sum squared component errors.
pub fn relative_l2_error<F, G>(
    f: F,
    f_hat: G,
    out_dim: usize,
    domain: &DomainBox,
    integ: &Integrator,
) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    let (pts, w) = integration_nodes(domain, integ)?;
    let d = domain.dim();
    let n = w.len();
    let sums = parallel::indexed_accumulate(n, 2, |i, buf| {
        let x = &pts[i * d..(i + 1) * d];
        let mut fv = vec![0.0; out_dim];
        let mut gv = vec![0.0; out_dim];
        f(x, &mut fv);
        f_hat(x, &mut gv);
        let mut err = 0.0;
        let mut nrm = 0.0;
        for k in 0..out_dim {
            err += (fv[k] - gv[k]) * (fv[k] - gv[k]);
            nrm += fv[k] * fv[k];
        }
        buf[0] += w[i] * err;
        buf[1] += w[i] * nrm;
    });
    if sums[1] <= 0.0 {
        return Err(CoreError::contract(
            "relative_l2_error: reference norm is zero on the node set",
        ));
    }
    Ok((sums[0] / sums[1]).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box(d: usize) -> DomainBox {
        DomainBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn identical_functions_have_zero_error() {
        let f = |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] + 1.0;
        let e = relative_l2_error(f, f, 1, &unit_box(2), &Integrator::Gauss { n_per_dim: 8 })
            .unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn scaled_constant_is_exactly_point_one() {
        let f = |_x: &[f64], out: &mut [f64]| out[0] = 1.0;
        let g = |_x: &[f64], out: &mut [f64]| out[0] = 1.1;
        for integ in [
            Integrator::Gauss { n_per_dim: 5 },
            Integrator::Mc { n: 500, seed: 3 },
        ] {
            let e = relative_l2_error(f, g, 1, &unit_box(3), &integ).unwrap();
            assert_relative_eq!(e, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_vs_zero_is_one() {
        let f = |x: &[f64], out: &mut [f64]| out[0] = x[0];
        let g = |_x: &[f64], out: &mut [f64]| out[0] = 0.0;
        let e = relative_l2_error(f, g, 1, &unit_box(1), &Integrator::Gauss { n_per_dim: 100 })
            .unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_reference_errors() {
        let z = |_x: &[f64], out: &mut [f64]| out[0] = 0.0;
        assert!(relative_l2_error(z, z, 1, &unit_box(1), &Integrator::Gauss { n_per_dim: 4 })
            .is_err());
    }

    #[test]
    fn scale_invariance() {
        let f = |x: &[f64], out: &mut [f64]| {
            out[0] = x[0].sin() + 0.3;
            out[1] = x[1] - 0.4;
        };
        let g = |x: &[f64], out: &mut [f64]| {
            out[0] = x[0].sin();
            out[1] = x[1];
        };
        let gauss = Integrator::Gauss { n_per_dim: 12 };
        let base = relative_l2_error(f, g, 2, &unit_box(2), &gauss).unwrap();
        for c in [2.0, -0.5, 1e6] {
            let fc = |x: &[f64], out: &mut [f64]| {
                f(x, out);
                out[0] *= c;
                out[1] *= c;
            };
            let gc = |x: &[f64], out: &mut [f64]| {
                g(x, out);
                out[0] *= c;
                out[1] *= c;
            };
            let scaled = relative_l2_error(fc, gc, 2, &unit_box(2), &gauss).unwrap();
            assert_relative_eq!(scaled, base, max_relative = 1e-12);
        }
    }
}
