//! SDE models, the Euler-Maruyama integrator, trajectory datasets, box
//! domains, and the two benchmark problems.

pub mod format;
pub mod langevin;
pub mod student;

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::rng::{self, RNG_ALGORITHM_ID};

pub type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
pub type DiffusionFn = dyn Fn(&[f64], &mut Mat) + Send + Sync;
pub type DensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An Itô diffusion `dX = a(X) dt + b(X) dW` with state dimension `d` and
/// noise dimension `m <= d`. Benchmark constructors attach the closed-form
/// stationary density when one is known.
#[derive(Clone)]
pub struct SdeModel {
    dim_state: usize,
    dim_noise: usize,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    true_density: Option<TrueDensity>,
}

#[derive(Clone)]
pub struct TrueDensity {
    pub normalized: bool,
    f: Arc<DensityFn>,
}

impl TrueDensity {
    pub fn new(normalized: bool, f: Arc<DensityFn>) -> Self {
        TrueDensity { normalized, f }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl SdeModel {
    pub fn new(
        dim_state: usize,
        dim_noise: usize,
        drift: Arc<DriftFn>,
        diffusion: Arc<DiffusionFn>,
    ) -> Self {
        assert!(dim_noise <= dim_state, "noise dimension exceeds state");
        SdeModel {
            dim_state,
            dim_noise,
            drift,
            diffusion,
            true_density: None,
        }
    }

    pub fn with_true_density(mut self, density: TrueDensity) -> Self {
        self.true_density = Some(density);
        self
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn true_density(&self) -> Option<&TrueDensity> {
        self.true_density.as_ref()
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut Mat) {
        (self.diffusion)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Mat {
        let mut out = Mat::zeros(self.dim_state, self.dim_noise);
        self.diffusion_into(x, &mut out);
        out
    }
}

/// Ordered states of one trajectory, stored column-major (one contiguous
/// block per coordinate) so per-coordinate statistics and domain fitting are
/// cache-friendly at large `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    dim: usize,
    n_states: usize,
    dt: f64,
    seed: u64,
    rng_algorithm: u32,
    data: Vec<f64>,
}

impl TimeSeriesDataset {
    pub fn new(dim: usize, dt: f64, seed: u64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        TimeSeriesDataset {
            dim,
            n_states: 0,
            dt,
            seed,
            rng_algorithm: RNG_ALGORITHM_ID,
            data: Vec::new(),
        }
    }

    pub fn from_columns(columns: Vec<Vec<f64>>, dt: f64, seed: u64) -> Self {
        assert!(!columns.is_empty());
        let n = columns[0].len();
        assert!(columns.iter().all(|c| c.len() == n), "ragged columns");
        let dim = columns.len();
        let mut data = Vec::with_capacity(dim * n);
        for c in columns {
            data.extend_from_slice(&c);
        }
        TimeSeriesDataset {
            dim,
            n_states: n,
            dt,
            seed,
            rng_algorithm: RNG_ALGORITHM_ID,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64, seed: u64) -> Self {
        assert!(!rows.is_empty());
        let dim = rows[0].len();
        let mut ds = TimeSeriesDataset::new(dim, dt, seed);
        ds.reserve(rows.len());
        for r in rows {
            ds.push_state(r);
        }
        ds
    }

    pub fn with_rng_algorithm(mut self, id: u32) -> Self {
        self.rng_algorithm = id;
        self
    }

    fn reserve(&mut self, n_states: usize) {
        // column-major growth requires the final count up front
        assert_eq!(self.n_states, 0, "reserve before pushing");
        self.data = vec![0.0; self.dim * n_states];
        self.n_states = 0;
    }

    fn push_state(&mut self, state: &[f64]) {
        assert_eq!(state.len(), self.dim);
        let cap = self.data.len() / self.dim.max(1);
        assert!(self.n_states < cap, "push_state beyond reserved capacity");
        for (k, v) in state.iter().enumerate() {
            self.data[k * cap + self.n_states] = *v;
        }
        self.n_states += 1;
    }

    fn finish(&mut self) {
        let cap = self.data.len() / self.dim.max(1);
        if self.n_states < cap {
            // shrink columns to the actual count
            let mut data = Vec::with_capacity(self.dim * self.n_states);
            for k in 0..self.dim {
                data.extend_from_slice(&self.data[k * cap..k * cap + self.n_states]);
            }
            self.data = data;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng_algorithm(&self) -> u32 {
        self.rng_algorithm
    }

    /// Contiguous values of coordinate `k` across all states.
    pub fn coord(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn state_into(&self, n: usize, out: &mut [f64]) {
        for k in 0..self.dim {
            out[k] = self.data[k * self.n_states + n];
        }
    }

    pub fn state(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.state_into(n, &mut out);
        out
    }

    /// Keep every `stride`-th state (indices 0, stride, 2*stride, ...).
    /// `dt` is left untouched: this thins storage, it does not re-time the
    /// chain. Regression pairs must be formed *before* striding.
    pub fn subsample(&self, stride: usize) -> TimeSeriesDataset {
        assert!(stride >= 1, "stride must be >= 1");
        if stride == 1 {
            return self.clone();
        }
        let kept: Vec<usize> = (0..self.n_states).step_by(stride).collect();
        let mut columns = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let col = self.coord(k);
            columns.push(kept.iter().map(|&i| col[i]).collect());
        }
        let mut ds = TimeSeriesDataset::from_columns(columns, self.dt, self.seed);
        ds.rng_algorithm = self.rng_algorithm;
        ds
    }
}

/// Labeled regression data: inputs `x^n` and targets `y^n`. For plain drift
/// regression the target is `(x^{n+1} - x^n) / dt` and both dimensions agree;
/// transformed problems may use a different input parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionPairs {
    input_dim: usize,
    target_dim: usize,
    len: usize,
    inputs: Vec<f64>,  // row-major len x input_dim
    targets: Vec<f64>, // row-major len x target_dim
}

impl RegressionPairs {
    pub fn with_capacity(input_dim: usize, target_dim: usize, cap: usize) -> Self {
        RegressionPairs {
            input_dim,
            target_dim,
            len: 0,
            inputs: Vec::with_capacity(cap * input_dim),
            targets: Vec::with_capacity(cap * target_dim),
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        assert_eq!(input.len(), self.input_dim);
        assert_eq!(target.len(), self.target_dim);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.input_dim..(n + 1) * self.input_dim]
    }

    pub fn target(&self, n: usize) -> &[f64] {
        &self.targets[n * self.target_dim..(n + 1) * self.target_dim]
    }

    /// Backing row-major input storage (`len * input_dim`).
    pub fn inputs_raw(&self) -> &[f64] {
        &self.inputs
    }

    /// Backing row-major target storage (`len * target_dim`).
    pub fn targets_raw(&self) -> &[f64] {
        &self.targets
    }

    /// Keep every `stride`-th pair. This is the striding that produces
    /// approximately independent samples for regression; targets keep their
    /// consecutive-state definition.
    pub fn subsample(&self, stride: usize) -> RegressionPairs {
        assert!(stride >= 1, "stride must be >= 1");
        if stride == 1 {
            return self.clone();
        }
        let mut out =
            RegressionPairs::with_capacity(self.input_dim, self.target_dim, self.len / stride + 1);
        let mut n = 0;
        while n < self.len {
            out.push(self.input(n), self.target(n));
            n += stride;
        }
        out
    }
}

/// One Euler-Maruyama step `x + a(x) dt + b(x) sqrt(dt) xi`.
pub fn em_step(model: &SdeModel, x: &[f64], dt: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim_state() {
        return Err(CoreError::contract(format!(
            "em_step: state has dimension {}, model expects {}",
            x.len(),
            model.dim_state()
        )));
    }
    if xi.len() != model.dim_noise() {
        return Err(CoreError::contract(format!(
            "em_step: noise has dimension {}, model expects {}",
            xi.len(),
            model.dim_noise()
        )));
    }
    if !(dt > 0.0) {
        return Err(CoreError::contract("em_step: dt must be positive"));
    }
    let mut drift = vec![0.0; model.dim_state()];
    let mut diff = Mat::zeros(model.dim_state(), model.dim_noise());
    let mut out = vec![0.0; model.dim_state()];
    em_step_into(model, x, dt, xi, &mut drift, &mut diff, &mut out)?;
    Ok(out)
}

/// Allocation-free EM step used by the simulation loop.
fn em_step_into(
    model: &SdeModel,
    x: &[f64],
    dt: f64,
    xi: &[f64],
    drift_buf: &mut [f64],
    diff_buf: &mut Mat,
    out: &mut [f64],
) -> Result<()> {
    model.drift_into(x, drift_buf);
    model.diffusion_into(x, diff_buf);
    if drift_buf.iter().any(|v| !v.is_finite()) || diff_buf.data().iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numerical(format!(
            "em_step: non-finite drift/diffusion at state {x:?}"
        )));
    }
    let sqrt_dt = dt.sqrt();
    let d = model.dim_state();
    let m = model.dim_noise();
    for i in 0..d {
        let mut noise = 0.0;
        let row = diff_buf.row(i);
        for j in 0..m {
            noise += row[j] * xi[j];
        }
        out[i] = x[i] + drift_buf[i] * dt + sqrt_dt * noise;
    }
    Ok(())
}

/// Receives simulated states one at a time; lets large runs stream straight
/// to disk instead of materializing in memory.
pub trait TrajectorySink {
    fn push(&mut self, state: &[f64]) -> Result<()>;
}

struct CollectSink {
    ds: TimeSeriesDataset,
}

impl TrajectorySink for CollectSink {
    fn push(&mut self, state: &[f64]) -> Result<()> {
        self.ds.push_state(state);
        Ok(())
    }
}

/// Simulate `n_steps` EM steps from `x0`, recording `n_steps + 1` states
/// (including `x0`). Identical `(model, x0, dt, n_steps, seed)` produce a
/// bit-identical trajectory.
pub fn simulate(
    model: &SdeModel,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    simulate_with_burn_in(model, x0, dt, n_steps, 0, seed)
}

/// As [`simulate`], but discards the first `burn_in` steps; the recorded
/// trajectory starts at the post-burn-in state.
pub fn simulate_with_burn_in(
    model: &SdeModel,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let mut ds = TimeSeriesDataset::new(model.dim_state(), dt, seed);
    ds.reserve(n_steps + 1);
    let mut sink = CollectSink { ds };
    simulate_into(model, x0, dt, n_steps, burn_in, seed, &mut sink)?;
    sink.ds.finish();
    Ok(sink.ds)
}

/// Simulation engine behind both the in-memory and streaming entry points.
pub fn simulate_into(
    model: &SdeModel,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    burn_in: usize,
    seed: u64,
    sink: &mut dyn TrajectorySink,
) -> Result<()> {
    if n_steps < 1 {
        return Err(CoreError::contract("simulate: n_steps must be >= 1"));
    }
    if x0.len() != model.dim_state() {
        return Err(CoreError::contract(format!(
            "simulate: x0 has dimension {}, model expects {}",
            x0.len(),
            model.dim_state()
        )));
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; model.dim_state()];
    let mut xi = vec![0.0; model.dim_noise()];
    let mut drift_buf = vec![0.0; model.dim_state()];
    let mut diff_buf = Mat::zeros(model.dim_state(), model.dim_noise());

    for step in 0..burn_in {
        rng::fill_standard_normal(&mut rng, &mut xi);
        em_step_into(model, &x, dt, &xi, &mut drift_buf, &mut diff_buf, &mut next).map_err(
            |e| CoreError::numerical(format!("simulate: burn-in step {step} failed: {e}")),
        )?;
        std::mem::swap(&mut x, &mut next);
        check_finite(&x, step)?;
    }
    sink.push(&x)?;
    for step in 0..n_steps {
        rng::fill_standard_normal(&mut rng, &mut xi);
        em_step_into(model, &x, dt, &xi, &mut drift_buf, &mut diff_buf, &mut next)
            .map_err(|e| CoreError::numerical(format!("simulate: step {step} failed: {e}")))?;
        std::mem::swap(&mut x, &mut next);
        check_finite(&x, step)?;
        sink.push(&x)?;
    }
    Ok(())
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numerical(format!(
            "simulate: trajectory escaped to non-finite values at step {step}"
        )));
    }
    Ok(())
}

/// Turn a trajectory into regression pairs: inputs `x^n`, targets
/// `(x^{n+1} - x^n) / dt` for `n = 0..N-1`.
pub fn make_pairs(dataset: &TimeSeriesDataset) -> Result<RegressionPairs> {
    if dataset.n_states() < 2 {
        return Err(CoreError::contract("make_pairs: need at least 2 states"));
    }
    let d = dataset.dim();
    let n = dataset.n_states() - 1;
    let mut pairs = RegressionPairs::with_capacity(d, d, n);
    let mut cur = vec![0.0; d];
    let mut nxt = vec![0.0; d];
    let mut tgt = vec![0.0; d];
    let inv_dt = 1.0 / dataset.dt();
    for i in 0..n {
        dataset.state_into(i, &mut cur);
        dataset.state_into(i + 1, &mut nxt);
        for k in 0..d {
            tgt[k] = (nxt[k] - cur[k]) * inv_dt;
        }
        pairs.push(&cur, &tgt);
    }
    Ok(pairs)
}

/// Axis-aligned box domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CoreError::contract("DomainBox: dimension mismatch"));
        }
        for (k, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo < hi) {
                return Err(CoreError::contract(format!(
                    "DomainBox: lower[{k}] = {lo} must be < upper[{k}] = {hi}"
                )));
            }
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.side(k)).product()
    }

    /// Total (d-1)-measure of the boundary: `2 * sum_k prod_{j != k} side_j`.
    pub fn boundary_measure(&self) -> f64 {
        2.0 * (0..self.dim()).map(|k| self.face_area(k)).sum::<f64>()
    }

    /// Area of one face orthogonal to axis `k`.
    pub fn face_area(&self, k: usize) -> f64 {
        (0..self.dim())
            .filter(|&j| j != k)
            .map(|j| self.side(j))
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter())
            .zip(self.upper.iter())
            .all(|((v, lo), hi)| v >= lo && v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Rule for deriving a box domain from data.
#[derive(Clone, Debug)]
pub enum DomainRule {
    /// Smallest box covering the central quantile range of fraction `q`.
    /// `joint = false` takes the `[(1-q)/2, (1+q)/2]` quantiles per axis;
    /// `joint = true` finds the smallest such quantile box that contains at
    /// least fraction `q` of the points jointly.
    Coverage { q: f64, joint: bool },
    /// Component-wise mean plus/minus user-supplied half-widths.
    MeanHalfwidth { halfwidths: Vec<f64> },
}

pub fn domain_from_data(dataset: &TimeSeriesDataset, rule: &DomainRule) -> Result<DomainBox> {
    if dataset.n_states() == 0 {
        return Err(CoreError::contract("domain_from_data: empty dataset"));
    }
    let d = dataset.dim();
    match rule {
        DomainRule::Coverage { q, joint } => {
            if !(*q > 0.0 && *q <= 1.0) {
                return Err(CoreError::contract(format!(
                    "domain_from_data: coverage q = {q} outside (0, 1]"
                )));
            }
            let mut sorted: Vec<Vec<f64>> = Vec::with_capacity(d);
            for k in 0..d {
                let mut col = dataset.coord(k).to_vec();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                sorted.push(col);
            }
            if !joint {
                return quantile_box(&sorted, *q);
            }
            // bisect the per-axis quantile level until joint coverage >= q
            let n = dataset.n_states();
            let target = (*q * n as f64).ceil() as usize;
            let mut lo_t = 0.0;
            let mut hi_t = 1.0;
            let mut best = quantile_box(&sorted, 1.0)?;
            for _ in 0..50 {
                let mid = 0.5 * (lo_t + hi_t);
                let boxed = quantile_box(&sorted, mid)?;
                let inside = count_inside(dataset, &boxed);
                if inside >= target {
                    best = boxed;
                    hi_t = mid;
                } else {
                    lo_t = mid;
                }
            }
            Ok(best)
        }
        DomainRule::MeanHalfwidth { halfwidths } => {
            if halfwidths.len() != d {
                return Err(CoreError::contract(format!(
                    "domain_from_data: {} half-widths for dimension {d}",
                    halfwidths.len()
                )));
            }
            let mut lower = Vec::with_capacity(d);
            let mut upper = Vec::with_capacity(d);
            for k in 0..d {
                let col = dataset.coord(k);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                lower.push(mean - halfwidths[k]);
                upper.push(mean + halfwidths[k]);
            }
            DomainBox::new(lower, upper)
        }
    }
}

fn quantile_box(sorted: &[Vec<f64>], q: f64) -> Result<DomainBox> {
    let n = sorted[0].len();
    let lo_q = (1.0 - q) / 2.0;
    let hi_q = (1.0 + q) / 2.0;
    let lo_idx = (lo_q * (n - 1) as f64).floor() as usize;
    let hi_idx = (hi_q * (n - 1) as f64).ceil() as usize;
    let mut lower = Vec::with_capacity(sorted.len());
    let mut upper = Vec::with_capacity(sorted.len());
    for col in sorted {
        let lo = col[lo_idx.min(n - 1)];
        let hi = col[hi_idx.min(n - 1)];
        // degenerate column (constant data): widen a hair so the box is valid
        if lo < hi {
            lower.push(lo);
            upper.push(hi);
        } else {
            lower.push(lo - 1e-12 - lo.abs() * 1e-12);
            upper.push(hi + 1e-12 + hi.abs() * 1e-12);
        }
    }
    DomainBox::new(lower, upper)
}

fn count_inside(dataset: &TimeSeriesDataset, domain: &DomainBox) -> usize {
    let n = dataset.n_states();
    let d = dataset.dim();
    let mut count = 0;
    for i in 0..n {
        let mut inside = true;
        for k in 0..d {
            let v = dataset.coord(k)[i];
            if v < domain.lower()[k] || v > domain.upper()[k] {
                inside = false;
                break;
            }
        }
        if inside {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests;
