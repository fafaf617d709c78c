//! Closing the loop: simulate the learned SDE, compare invariant statistics
//! with ground truth, and compute marginal densities and test-set errors.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fields::{DiffusionField, VectorField};
use crate::linalg::{psd_sqrt, Mat};
use crate::parallel;
use crate::rng::{self, derive_seed, rng_from_seed};
use crate::sde::{DomainBox, TimeSeriesDataset};

/// Sample mean and unbiased covariance of a chain segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: Vec<f64>,
    pub covariance: Mat,
    pub count: usize,
}

pub fn moment_stats(dataset: &TimeSeriesDataset, burn_in: usize) -> Result<MomentStats> {
    if burn_in >= dataset.n_states() {
        return Err(CoreError::contract(format!(
            "moment_stats: burn-in {burn_in} >= chain length {}",
            dataset.n_states()
        )));
    }
    let n = dataset.n_states() - burn_in;
    if n < 2 {
        return Err(CoreError::contract(
            "moment_stats: need at least 2 post-burn-in states",
        ));
    }
    let d = dataset.dim();
    let mut mean = vec![0.0; d];
    for k in 0..d {
        let col = &dataset.coord(k)[burn_in..];
        mean[k] = parallel::indexed_sum(n, |i| col[i]) / n as f64;
    }
    let mut cov = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let ci = &dataset.coord(i)[burn_in..];
            let cj = &dataset.coord(j)[burn_in..];
            let mi = mean[i];
            let mj = mean[j];
            let s = parallel::indexed_sum(n, |t| (ci[t] - mi) * (cj[t] - mj));
            let v = s / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(MomentStats {
        mean,
        covariance: cov,
        count: n,
    })
}

/// Streaming accumulator for runs too large to hold in memory.
#[derive(Clone, Debug)]
pub struct StreamingMoments {
    dim: usize,
    skip: usize,
    seen: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>, // d x d row-major
}

impl StreamingMoments {
    pub fn new(dim: usize, burn_in: usize) -> Self {
        StreamingMoments {
            dim,
            skip: burn_in,
            seen: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim * dim],
        }
    }

    pub fn push(&mut self, state: &[f64]) {
        if self.skip > 0 {
            self.skip -= 1;
            return;
        }
        self.seen += 1;
        for i in 0..self.dim {
            self.sum[i] += state[i];
            for j in 0..self.dim {
                self.sum_sq[i * self.dim + j] += state[i] * state[j];
            }
        }
    }

    pub fn finish(&self) -> Result<MomentStats> {
        let n = self.seen;
        if n < 2 {
            return Err(CoreError::contract(
                "moment_stats: need at least 2 post-burn-in states",
            ));
        }
        let d = self.dim;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n as f64).collect();
        let mut cov = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] =
                    (self.sum_sq[i * d + j] - n as f64 * mean[i] * mean[j]) / (n - 1) as f64;
            }
        }
        Ok(MomentStats {
            mean,
            covariance: cov,
            count: n,
        })
    }
}

/// Simulate the learned SDE
/// `x' = x + a(x) dt + U S^{1/2} U^T sqrt(dt) xi`
/// where `U S U^T` is the eigendecomposition of the (PSD-projected)
/// diffusion estimate at `x`. Constant diffusions factor once.
pub fn simulate_learned_chain(
    drift: &dyn VectorField,
    diffusion: &dyn DiffusionField,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let d = drift.dim_in();
    if drift.dim_out() != d {
        return Err(CoreError::contract(
            "simulate_learned_chain: drift must be square",
        ));
    }
    if diffusion.dim() != d || x0.len() != d {
        return Err(CoreError::contract(
            "simulate_learned_chain: dimension mismatch",
        ));
    }
    if !(dt > 0.0) || n_steps < 1 {
        return Err(CoreError::contract(
            "simulate_learned_chain: need dt > 0 and n_steps >= 1",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let sqrt_dt = dt.sqrt();
    let constant_sqrt = match diffusion.constant_matrix() {
        Some(b) => Some(psd_sqrt(&b)?),
        None => None,
    };
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + 1); d];
    let mut x = x0.to_vec();
    let mut a = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut b = Mat::zeros(d, d);
    for (k, col) in columns.iter_mut().enumerate() {
        col.push(x[k]);
    }
    for step in 0..n_steps {
        drift.eval_into(&x, &mut a);
        rng::fill_standard_normal(&mut rng, &mut xi);
        if let Some(m) = &constant_sqrt {
            m.matvec_into(&xi, &mut noise);
        } else {
            diffusion.eval_into(&x, &mut b);
            let amp = psd_sqrt(&b).map_err(|e| {
                CoreError::numerical(format!(
                    "simulate_learned_chain: step {step}: eigendecomposition failed: {e}"
                ))
            })?;
            amp.matvec_into(&xi, &mut noise);
        }
        for k in 0..d {
            x[k] += a[k] * dt + sqrt_dt * noise[k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::numerical(format!(
                "simulate_learned_chain: state became non-finite at step {step}"
            )));
        }
        for (k, col) in columns.iter_mut().enumerate() {
            col.push(x[k]);
        }
    }
    Ok(TimeSeriesDataset::from_columns(columns, dt, seed))
}

/// Split-update chain for the transformed Langevin structure: velocities
/// receive noise `sqrt(b_kk dt) xi_k`, displacements update
/// deterministically from the drift differences.
pub fn simulate_learned_langevin_chain(
    drift: &dyn VectorField,
    b_diag: &[f64],
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let dim = drift.dim_in();
    let m = drift.dim_out() / 2;
    if drift.dim_out() != 2 * m || dim != 2 * m - 1 {
        return Err(CoreError::contract(
            "simulate_learned_langevin_chain: drift must map R^{2M-1} to R^{2M}",
        ));
    }
    if b_diag.len() < m || x0.len() != dim {
        return Err(CoreError::contract(
            "simulate_learned_langevin_chain: dimension mismatch",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let amps: Vec<f64> = b_diag[..m]
        .iter()
        .map(|&v| (v.max(0.0) * dt).sqrt())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + 1); dim];
    let mut x = x0.to_vec();
    let mut a = vec![0.0; 2 * m];
    let mut xi = vec![0.0; m];
    for (k, col) in columns.iter_mut().enumerate() {
        col.push(x[k]);
    }
    for step in 0..n_steps {
        drift.eval_into(&x, &mut a);
        rng::fill_standard_normal(&mut rng, &mut xi);
        for k in 0..m {
            x[k] += a[k] * dt + amps[k] * xi[k];
        }
        for j in 0..m - 1 {
            x[m + j] += (a[m + j + 1] - a[m + j]) * dt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::numerical(format!(
                "simulate_learned_langevin_chain: state became non-finite at step {step}"
            )));
        }
        for (k, col) in columns.iter_mut().enumerate() {
            col.push(x[k]);
        }
    }
    Ok(TimeSeriesDataset::from_columns(columns, dt, seed))
}

/// One marginal-density curve estimated by Monte Carlo over domain slices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalCurve {
    pub coordinate: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_mc: usize,
}

/// Estimate the marginal of `density` in coordinate `k` on `grid`: for each
/// grid value, average the density over the remaining coordinates (uniform
/// over the domain slice, scaled by slice volume). Each grid point draws its
/// own derived seed so curves are reproducible and grid-parallel.
pub fn marginal_density_mc<F>(
    density: F,
    k: usize,
    grid: &[f64],
    n_mc: usize,
    seed: u64,
    domain: &DomainBox,
) -> Result<MarginalCurve>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_mc == 0 {
        return Err(CoreError::contract(
            "marginal_density_mc: n_mc must be >= 1",
        ));
    }
    let d = domain.dim();
    if k >= d {
        return Err(CoreError::contract(
            "marginal_density_mc: coordinate out of range",
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::contract(
            "marginal_density_mc: grid must be strictly increasing",
        ));
    }
    if grid
        .iter()
        .any(|&t| t < domain.lower()[k] || t > domain.upper()[k])
    {
        return Err(CoreError::contract(
            "marginal_density_mc: grid leaves the domain range",
        ));
    }
    let slice_volume: f64 = (0..d).filter(|&j| j != k).map(|j| domain.side(j)).product();
    let results = parallel::map_collect(grid.len(), |gi| {
        let t = grid[gi];
        let mut rng = rng_from_seed(derive_seed(seed, gi as u64));
        let mut x = vec![0.0; d];
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_mc {
            rng::fill_uniform_box(&mut rng, domain.lower(), domain.upper(), &mut x);
            x[k] = t;
            let v = density(&x);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n_mc as f64;
        let var = (sum_sq / n_mc as f64 - mean * mean).max(0.0);
        (
            slice_volume * mean,
            slice_volume * (var / n_mc as f64).sqrt(),
        )
    });
    let (values, stderr): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numerical(
            "marginal_density_mc: non-finite marginal estimate",
        ));
    }
    Ok(MarginalCurve {
        coordinate: k,
        grid: grid.to_vec(),
        values,
        stderr,
        n_mc,
    })
}

/// Normalization constant `c = (int_Omega p0)^{-1}` by Monte Carlo, so that
/// `c * p0` integrates to one over the box.
pub fn mc_normalization_constant<F>(
    density: F,
    domain: &DomainBox,
    n_mc: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_mc == 0 {
        return Err(CoreError::contract(
            "mc_normalization_constant: n_mc must be >= 1",
        ));
    }
    let d = domain.dim();
    let pts = crate::fp::sample_uniform_box(domain, n_mc, seed);
    let mean = parallel::indexed_sum(n_mc, |i| density(&pts[i * d..(i + 1) * d])) / n_mc as f64;
    let integral = mean * domain.volume();
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(CoreError::numerical(format!(
            "mc_normalization_constant: integral estimate {integral} is not positive"
        )));
    }
    Ok(1.0 / integral)
}

/// `sqrt( sum |p - p_ref|^2 / sum |p_ref|^2 )` over a test point set.
pub fn testset_relative_error<F, G>(
    density: F,
    reference: G,
    points: &[f64],
    dim: usize,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let n = points.len() / dim;
    if n == 0 {
        return Err(CoreError::contract(
            "testset_relative_error: empty test set",
        ));
    }
    let sums = parallel::indexed_accumulate(n, 2, |i, buf| {
        let x = &points[i * dim..(i + 1) * dim];
        let p = density(x);
        let r = reference(x);
        buf[0] += (p - r) * (p - r);
        buf[1] += r * r;
    });
    if sums[1] <= 0.0 {
        return Err(CoreError::contract(
            "testset_relative_error: reference vanishes on the test set",
        ));
    }
    Ok((sums[0] / sums[1]).sqrt())
}
