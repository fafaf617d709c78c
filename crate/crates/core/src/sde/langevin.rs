//! Langevin dynamics of a periodic particle chain with a Lennard-Jones
//! pair potential, plus the displacement-coordinate machinery used to make
//! its (translation-invariant) Gibbs law normalizable.
//!
//! State layout is `(v_1..v_M, r_1..r_M)`. Noise enters only the velocity
//! rows. The transformed coordinates are `(v, d)` with `d_i = r_{i+1} - r_i`.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::fields::VectorField;
use crate::linalg::Mat;
use crate::sde::SdeModel;

/// Guard for the pair-potential singularity at zero separation.
const PSI_SINGULARITY_EPS: f64 = 1e-8;

/// Chain parameters. `state layout: (v_1..v_M, r_1..r_M)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LangevinModel {
    pub n_particles: usize,
    pub a0: f64,
    pub gamma: f64,
    pub k_b_t: f64,
}

impl LangevinModel {
    pub fn new(n_particles: usize, a0: f64, gamma: f64, k_b_t: f64) -> Result<Self> {
        if n_particles < 3 {
            return Err(CoreError::contract(
                "LangevinModel: the pair potential couples i-1 and i-2 neighbors; need M >= 3",
            ));
        }
        if !(gamma > 0.0) || !(k_b_t > 0.0) {
            return Err(CoreError::contract(
                "LangevinModel: gamma and k_B T must be positive",
            ));
        }
        Ok(LangevinModel {
            n_particles,
            a0,
            gamma,
            k_b_t,
        })
    }

    pub fn dim_state(&self) -> usize {
        2 * self.n_particles
    }

    pub fn dim_noise(&self) -> usize {
        self.n_particles
    }

    /// Diagonal of `b b^T` in the `(v, r)` coordinates: `2 k_B T gamma` on
    /// the velocity block, zero on the displacement block.
    pub fn true_diffusion_diag(&self) -> Vec<f64> {
        let m = self.n_particles;
        let mut diag = vec![2.0 * self.k_b_t * self.gamma; m];
        diag.extend(std::iter::repeat(0.0).take(m));
        diag
    }
}

/// Lennard-Jones pair potential `psi(r) = |r|^-12 - |r|^-6`.
pub fn lj_psi(r: f64) -> Result<f64> {
    if r.abs() < PSI_SINGULARITY_EPS {
        return Err(CoreError::numerical(format!(
            "lj_psi: pair separation {r} within singularity guard (collision)"
        )));
    }
    let a = r.abs();
    let inv6 = a.powi(-6);
    Ok(inv6 * inv6 - inv6)
}

/// `psi'(r) = -12 |r|^-13 sign(r) + 6 |r|^-7 sign(r)`.
pub fn lj_psi_prime(r: f64) -> Result<f64> {
    if r.abs() < PSI_SINGULARITY_EPS {
        return Err(CoreError::numerical(format!(
            "lj_psi_prime: pair separation {r} within singularity guard (collision)"
        )));
    }
    let a = r.abs();
    let s = r.signum();
    Ok((-12.0 * a.powi(-13) + 6.0 * a.powi(-7)) * s)
}

/// `psi''(r) = 156 |r|^-14 - 42 |r|^-8`.
pub fn lj_psi_second(r: f64) -> Result<f64> {
    if r.abs() < PSI_SINGULARITY_EPS {
        return Err(CoreError::numerical(format!(
            "lj_psi_second: pair separation {r} within singularity guard (collision)"
        )));
    }
    let a = r.abs();
    Ok(156.0 * a.powi(-14) - 42.0 * a.powi(-8))
}

/// Index of particle `i - off` under the periodic wrap `r_0 := r_M`,
/// `r_{-1} := r_{M-1}` (0-based).
fn wrap(i: usize, off: usize, m: usize) -> usize {
    (i + m - off) % m
}

/// Chain potential `U(r) = sum_i sum_{j=i-2..i-1} psi(r_i - r_j + (i-j) a0)`.
pub fn lj_potential(r: &[f64], a0: f64) -> Result<f64> {
    let m = r.len();
    let mut u = 0.0;
    for i in 0..m {
        for off in 1..=2usize {
            let j = wrap(i, off, m);
            u += lj_psi(r[i] - r[j] + off as f64 * a0)?;
        }
    }
    Ok(u)
}

/// `out = grad U(r)`, accumulated analytically from `psi'`.
pub fn lj_potential_grad(r: &[f64], a0: f64, out: &mut [f64]) -> Result<()> {
    let m = r.len();
    out.fill(0.0);
    for i in 0..m {
        for off in 1..=2usize {
            let j = wrap(i, off, m);
            let dpsi = lj_psi_prime(r[i] - r[j] + off as f64 * a0)?;
            out[i] += dpsi;
            out[j] -= dpsi;
        }
    }
    Ok(())
}

/// Hessian of `U`, needed for exact Jacobians of the transformed drift.
pub fn lj_potential_hessian(r: &[f64], a0: f64) -> Result<Mat> {
    let m = r.len();
    let mut h = Mat::zeros(m, m);
    for i in 0..m {
        for off in 1..=2usize {
            let j = wrap(i, off, m);
            let d2 = lj_psi_second(r[i] - r[j] + off as f64 * a0)?;
            h[(i, i)] += d2;
            h[(j, j)] += d2;
            h[(i, j)] -= d2;
            h[(j, i)] -= d2;
        }
    }
    Ok(h)
}

pub fn langevin_model(m: usize, a0: f64, gamma: f64, k_b_t: f64) -> Result<SdeModel> {
    let params = LangevinModel::new(m, a0, gamma, k_b_t)?;
    Ok(sde_model(&params))
}

pub fn sde_model(params: &LangevinModel) -> SdeModel {
    let m = params.n_particles;
    let a0 = params.a0;
    let gamma = params.gamma;
    let noise_amp = (2.0 * params.k_b_t * params.gamma).sqrt();

    let drift = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let (v, r) = x.split_at(m);
        let (dv, dr) = out.split_at_mut(m);
        // a collision inside a drift closure surfaces as a non-finite value,
        // which the integrator reports with the offending state
        match grad_into(r, a0, dv) {
            Ok(()) => {
                for k in 0..m {
                    dv[k] = -dv[k] - gamma * v[k];
                }
            }
            Err(_) => dv.fill(f64::NAN),
        }
        dr.copy_from_slice(v);
    });
    let diffusion = Arc::new(move |_x: &[f64], out: &mut Mat| {
        out.fill(0.0);
        for k in 0..m {
            out[(k, k)] = noise_amp;
        }
    });
    SdeModel::new(2 * m, m, drift, diffusion)
}

fn grad_into(r: &[f64], a0: f64, out: &mut [f64]) -> Result<()> {
    lj_potential_grad(r, a0, out)
}

/// Relative displacements `d_i = r_{i+1} - r_i`, `i = 1..M-1`.
pub fn transform_displacements(r: &[f64]) -> Vec<f64> {
    r.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Half-widths for the transformed `(v, d)` domain: 1.0 per velocity
/// coordinate, 0.1 per relative displacement.
pub fn transformed_domain_halfwidths(m: usize) -> Vec<f64> {
    let mut hw = vec![1.0; m];
    hw.extend(std::iter::repeat(0.1).take(m - 1));
    hw
}

/// Regression pairs for the transformed problem: inputs `(v^n, d^n)` in
/// `R^{2M-1}`, targets `(x^{n+1} - x^n) / dt` over the raw `(v, r)` state in
/// `R^{2M}`. Pairing uses consecutive raw states; stride afterwards.
pub fn transformed_pairs(
    dataset: &crate::sde::TimeSeriesDataset,
    m: usize,
) -> Result<crate::sde::RegressionPairs> {
    if dataset.dim() != 2 * m {
        return Err(CoreError::contract(format!(
            "transformed_pairs: dataset dimension {} does not match 2M = {}",
            dataset.dim(),
            2 * m
        )));
    }
    if dataset.n_states() < 2 {
        return Err(CoreError::contract("transformed_pairs: need at least 2 states"));
    }
    let n = dataset.n_states() - 1;
    let mut pairs = crate::sde::RegressionPairs::with_capacity(2 * m - 1, 2 * m, n);
    let mut cur = vec![0.0; 2 * m];
    let mut nxt = vec![0.0; 2 * m];
    let mut input = vec![0.0; 2 * m - 1];
    let mut target = vec![0.0; 2 * m];
    let inv_dt = 1.0 / dataset.dt();
    for i in 0..n {
        dataset.state_into(i, &mut cur);
        dataset.state_into(i + 1, &mut nxt);
        input[..m].copy_from_slice(&cur[..m]);
        for j in 0..m - 1 {
            input[m + j] = cur[m + j + 1] - cur[m + j];
        }
        for k in 0..2 * m {
            target[k] = (nxt[k] - cur[k]) * inv_dt;
        }
        pairs.push(&input, &target);
    }
    Ok(pairs)
}

/// Reconstruct one representative `r` with `r_1 = 0` from displacements.
pub fn displacements_to_positions(d: &[f64]) -> Vec<f64> {
    let mut r = Vec::with_capacity(d.len() + 1);
    r.push(0.0);
    let mut acc = 0.0;
    for v in d {
        acc += v;
        r.push(acc);
    }
    r
}

/// Chain potential expressed in displacement coordinates.
pub fn chain_energy_displacements(m: usize, a0: f64, d: &[f64]) -> Result<f64> {
    if d.len() != m - 1 {
        return Err(CoreError::contract(format!(
            "chain_energy_displacements: {} displacements for M = {m}",
            d.len()
        )));
    }
    let r = displacements_to_positions(d);
    lj_potential(&r, a0)
}

/// Unnormalized Gibbs density in `(v, d)` coordinates:
/// `exp(-(U(d) + |v|^2 / 2) / k_B T)`.
pub fn lj_gibbs_density_unnormalized(
    m: usize,
    a0: f64,
    k_b_t: f64,
    v: &[f64],
    d: &[f64],
) -> Result<f64> {
    if v.len() != m {
        return Err(CoreError::contract(format!(
            "lj_gibbs_density_unnormalized: {} velocities for M = {m}",
            v.len()
        )));
    }
    let u = chain_energy_displacements(m, a0, d)?;
    let kinetic = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
    Ok((-(u + kinetic) / k_b_t).exp())
}

/// Exact drift of the chain in transformed coordinates: input `(v, d)` in
/// `R^{2M-1}`, output the full `(dv/dt, dr/dt)` drift in `R^{2M}`.
pub struct LangevinTransformedDrift {
    pub params: LangevinModel,
}

impl VectorField for LangevinTransformedDrift {
    fn dim_in(&self) -> usize {
        2 * self.params.n_particles - 1
    }
    fn dim_out(&self) -> usize {
        2 * self.params.n_particles
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.params.n_particles;
        let (v, d) = x.split_at(m);
        let r = displacements_to_positions(d);
        let (dv, dr) = out.split_at_mut(m);
        if lj_potential_grad(&r, self.params.a0, dv).is_err() {
            dv.fill(f64::NAN);
        } else {
            for k in 0..m {
                dv[k] = -dv[k] - self.params.gamma * v[k];
            }
        }
        dr.copy_from_slice(v);
    }
    fn jacobian_into(&self, x: &[f64], out: &mut Mat) {
        let m = self.params.n_particles;
        let (_v, d) = x.split_at(m);
        let r = displacements_to_positions(d);
        out.fill(0.0);
        // velocity rows: -gamma on dv_k/dv_k, -d(grad U)_k/dd_j on the d block
        let hess = lj_potential_hessian(&r, self.params.a0).unwrap_or_else(|_| {
            let mut h = Mat::zeros(m, m);
            h.fill(f64::NAN);
            h
        });
        for k in 0..m {
            out[(k, k)] = -self.params.gamma;
            for j in 0..m - 1 {
                // dr_l/dd_j = 1 for l > j (with r_1 pinned at 0)
                let mut acc = 0.0;
                for l in (j + 1)..m {
                    acc += hess[(k, l)];
                }
                out[(k, m + j)] = -acc;
            }
        }
        // displacement-rate rows: d r_k / dt = v_k
        for k in 0..m {
            out[(m + k, k)] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psi_values() {
        assert_eq!(lj_psi(1.0).unwrap(), 0.0);
        // analytic minimum at 2^{1/6}: 2^-2 - 2^-1
        assert_relative_eq!(
            lj_psi(2.0_f64.powf(1.0 / 6.0)).unwrap(),
            -0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn psi_singularity_guard() {
        assert!(matches!(lj_psi(1e-9), Err(CoreError::Numerical(_))));
        assert!(matches!(lj_psi_prime(0.0), Err(CoreError::Numerical(_))));
    }

    #[test]
    fn psi_prime_matches_finite_difference() {
        let h = 1e-6;
        for r in [0.8, 1.0, 1.3, 2.0, -0.9] {
            let fd = (lj_psi(r + h).unwrap() - lj_psi(r - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(lj_psi_prime(r).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn grad_vanishes_at_equilibrium_chain() {
        for m in [3, 5, 10] {
            let r = vec![0.0; m];
            let mut g = vec![0.0; m];
            lj_potential_grad(&r, 1.0, &mut g).unwrap();
            for v in g {
                assert!(v.abs() < 1e-12, "gradient {v} at equilibrium");
            }
        }
    }

    #[test]
    fn grad_matches_finite_difference() {
        let m = 5;
        let r: Vec<f64> = (0..m).map(|i| 0.03 * (i as f64 - 2.0).sin()).collect();
        let mut g = vec![0.0; m];
        lj_potential_grad(&r, 1.0, &mut g).unwrap();
        let h = 1e-6;
        for k in 0..m {
            let mut rp = r.clone();
            let mut rm = r.clone();
            rp[k] += h;
            rm[k] -= h;
            let fd = (lj_potential(&rp, 1.0).unwrap() - lj_potential(&rm, 1.0).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn diffusion_rows_below_velocity_block_are_zero() {
        let model = langevin_model(4, 1.0, 0.5, 0.25).unwrap();
        let b = model.diffusion(&vec![0.1; 8]);
        for i in 4..8 {
            for j in 0..4 {
                assert_eq!(b[(i, j)], 0.0);
            }
        }
        for i in 0..4 {
            assert_relative_eq!(b[(i, i)], (2.0 * 0.25 * 0.5_f64).sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn transform_trivials() {
        assert_eq!(transform_displacements(&[0.0; 6]), vec![0.0; 5]);
        let r: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert_eq!(transform_displacements(&r), vec![1.0; 4]);
    }

    #[test]
    fn gibbs_at_equilibrium_counts_pair_terms() {
        // U(0) = M psi(a0) + M psi(2 a0)
        for m in [3, 6] {
            let (a0, kbt) = (1.0, 0.25);
            let v = vec![0.0; m];
            let d = vec![0.0; m - 1];
            let got = lj_gibbs_density_unnormalized(m, a0, kbt, &v, &d).unwrap();
            let u0 = m as f64 * (lj_psi(a0).unwrap() + lj_psi(2.0 * a0).unwrap());
            assert_relative_eq!(got, (-u0 / kbt).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn gibbs_velocity_factor_separates() {
        let m = 4;
        let d = vec![0.01, -0.02, 0.015];
        let v1 = vec![0.3, -0.1, 0.2, 0.05];
        let v2 = vec![0.0; 4];
        let kbt = 0.25;
        let p1 = lj_gibbs_density_unnormalized(m, 1.0, kbt, &v1, &d).unwrap();
        let p2 = lj_gibbs_density_unnormalized(m, 1.0, kbt, &v2, &d).unwrap();
        let k1 = 0.5 * v1.iter().map(|x| x * x).sum::<f64>();
        assert_relative_eq!(p1 * (k1 / kbt).exp(), p2, max_relative = 1e-12);
    }

    #[test]
    fn gibbs_high_temperature_limit() {
        let m = 3;
        let v = vec![0.4, -0.2, 0.1];
        let d = vec![0.02, -0.01];
        let p = lj_gibbs_density_unnormalized(m, 1.0, 1e6, &v, &d).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn transformed_drift_matches_untransformed_model() {
        let params = LangevinModel::new(5, 1.0, 0.5, 0.25).unwrap();
        let model = sde_model(&params);
        let drift = LangevinTransformedDrift { params };
        let mut rng = crate::rng::rng_from_seed(11);
        use rand::Rng;
        for _ in 0..10 {
            let r: Vec<f64> = (0..5).map(|_| 0.04 * (rng.gen::<f64>() - 0.5)).collect();
            let v: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() - 0.5).collect();
            let x: Vec<f64> = v.iter().chain(r.iter()).copied().collect();
            let a_full = model.drift(&x);
            let mut vd = v.clone();
            vd.extend(transform_displacements(&r));
            let a_trans = drift.eval(&vd);
            for k in 0..10 {
                assert_relative_eq!(a_full[k], a_trans[k], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transformed_drift_jacobian_matches_finite_difference() {
        let params = LangevinModel::new(4, 1.0, 0.5, 0.25).unwrap();
        let drift = LangevinTransformedDrift { params };
        let x: Vec<f64> = vec![0.2, -0.1, 0.05, 0.3, 0.01, -0.02, 0.03];
        let mut jac = Mat::zeros(8, 7);
        drift.jacobian_into(&x, &mut jac);
        let h = 1e-6;
        for j in 0..7 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = drift.eval(&xp);
            let fm = drift.eval(&xm);
            for k in 0..8 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert_relative_eq!(jac[(k, j)], fd, max_relative = 1e-4, epsilon = 1e-6);
            }
        }
    }
}
