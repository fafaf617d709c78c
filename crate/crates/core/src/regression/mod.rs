//! Drift and diffusion estimation from regression pairs, plus the error
//! metrics used to compare estimates against ground truth.

pub mod metrics;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fields::{DiffusionField, VectorField};
use crate::linalg::{psd_project, Mat};
use crate::nn::{Activation, Adam, InitScheme, NetWorkspace, Network};
use crate::parallel;
use crate::rng::{self, derive_seed};
use crate::sde::RegressionPairs;

pub use crate::linalg::psd_project as psd_project_matrix;
pub use metrics::{relative_l2_error, Integrator};

thread_local! {
    static TL_WS: RefCell<NetWorkspace> = RefCell::new(NetWorkspace::new());
}

/// Network architecture description; `build` instantiates it for a given
/// input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArchSpec {
    Mlp {
        width: usize,
        hidden_layers: usize,
        activation: Activation,
    },
    Resnet {
        width: usize,
        hidden_layers: usize,
        activation: Activation,
    },
    TwoLayerRelu3 {
        neurons: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        clamp: Option<f64>,
    },
}

impl ArchSpec {
    pub fn build(&self, input_dim: usize) -> Result<Network> {
        match self {
            ArchSpec::Mlp {
                width,
                hidden_layers,
                activation,
            } => Network::feedforward(input_dim, vec![*width; *hidden_layers], *activation, false),
            ArchSpec::Resnet {
                width,
                hidden_layers,
                activation,
            } => Network::feedforward(input_dim, vec![*width; *hidden_layers], *activation, true),
            ArchSpec::TwoLayerRelu3 { neurons, clamp } => {
                Network::two_layer_relu3(input_dim, *neurons, *clamp)
            }
        }
    }
}

/// Mini-batch Adam settings shared by the regression fits.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub batch_size: usize,
    pub iterations: u64,
    pub lr0: f64,
    pub lr_min: f64,
    pub cosine_schedule: bool,
    pub seed: u64,
    /// Applied to the pair set before training (1 = keep everything).
    pub subsample_stride: usize,
    /// Default sampling draws batches uniformly with replacement; this flag
    /// switches to epoch-based shuffling.
    pub epoch_shuffle: bool,
    pub init: InitScheme,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            batch_size: 1024,
            iterations: 2000,
            lr0: 1e-3,
            lr_min: 0.0,
            cosine_schedule: true,
            seed: 0,
            subsample_stride: 1,
            epoch_shuffle: false,
            init: InitScheme::HeUniform,
        }
    }
}

/// Training record attached to every fitted network.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub final_loss: f64,
    /// `(iteration, mini-batch loss)`, downsampled.
    pub loss_curve: Vec<(u64, f64)>,
    pub seed: u64,
    pub iterations: u64,
}

struct ScalarData<'a> {
    inputs: &'a [f64],
    dim: usize,
    targets: &'a [f64],
    n: usize,
}

/// Mini-batch Adam on the empirical squared loss
/// `(1/|B|) sum |t_n - net(x_n)|^2`. Returns the final iterate; the global
/// minimizer is not certified.
fn fit_scalar(
    data: &ScalarData,
    mut net: Network,
    cfg: &FitConfig,
    seed: u64,
) -> Result<(Network, FitReport)> {
    if data.n == 0 {
        return Err(CoreError::contract("fit: empty pair set"));
    }
    if cfg.batch_size == 0 || cfg.batch_size > data.n {
        return Err(CoreError::contract(format!(
            "fit: batch size {} must be in 1..={}",
            cfg.batch_size, data.n
        )));
    }
    if cfg.iterations < 1 {
        return Err(CoreError::contract("fit: iterations must be >= 1"));
    }
    let n_params = net.n_params();
    let mut opt =
        Adam::new(n_params, cfg.lr0, cfg.iterations, cfg.cosine_schedule).with_lr_min(cfg.lr_min);
    let mut batch_rng = rng::rng_from_seed(seed);
    let mut order: Vec<usize> = (0..data.n).collect();
    let mut cursor = data.n; // forces an initial shuffle in epoch mode
    let mut batch = vec![0usize; cfg.batch_size];
    let curve_stride = (cfg.iterations / 256).max(1);
    let mut curve = Vec::new();
    let mut last_loss = f64::NAN;

    use rand::Rng;
    for t in 0..cfg.iterations {
        if cfg.epoch_shuffle {
            for slot in batch.iter_mut() {
                if cursor >= data.n {
                    // Fisher-Yates reshuffle per epoch
                    for i in (1..data.n).rev() {
                        let j = batch_rng.gen_range(0..=i);
                        order.swap(i, j);
                    }
                    cursor = 0;
                }
                *slot = order[cursor];
                cursor += 1;
            }
        } else {
            for slot in batch.iter_mut() {
                *slot = batch_rng.gen_range(0..data.n);
            }
        }

        let inv_b = 1.0 / cfg.batch_size as f64;
        let acc = parallel::indexed_accumulate(cfg.batch_size, n_params + 1, |i, buf| {
            let idx = batch[i];
            let x = &data.inputs[idx * data.dim..(idx + 1) * data.dim];
            TL_WS.with(|ws| {
                let ws = &mut ws.borrow_mut();
                let pred = net.eval(x, 0, ws);
                let err = pred - data.targets[idx];
                buf[n_params] += err * err * inv_b;
                net.backward_value(2.0 * err * inv_b, ws, &mut buf[..n_params]);
            });
        });
        let loss = acc[n_params];
        if !loss.is_finite() {
            return Err(CoreError::numerical(format!(
                "fit: loss diverged (non-finite) at iteration {t}"
            )));
        }
        opt.step(net.params_mut(), &acc[..n_params]).map_err(|e| {
            let msg = e.to_string();
            let block = msg
                .rsplit_once("index ")
                .and_then(|(_, idx)| idx.trim().parse::<usize>().ok())
                .map(|idx| net.param_block_name(idx))
                .unwrap_or_else(|| "?".to_string());
            CoreError::numerical(format!("fit: iteration {t}: {msg} (block {block})"))
        })?;
        net.clamp_parameters();
        last_loss = loss;
        if t % curve_stride == 0 || t + 1 == cfg.iterations {
            curve.push((t, loss));
        }
    }
    let report = FitReport {
        final_loss: last_loss,
        loss_curve: curve,
        seed,
        iterations: cfg.iterations,
    };
    Ok((net, report))
}

/// Per-component drift estimator: one scalar network per output dimension.
#[derive(Clone, Debug)]
pub struct DriftModel {
    components: Vec<Network>,
    pub reports: Vec<FitReport>,
}

impl DriftModel {
    pub fn new(components: Vec<Network>) -> Result<Self> {
        if components.is_empty() {
            return Err(CoreError::contract("DriftModel: no components"));
        }
        let d = components[0].input_dim();
        if components.iter().any(|c| c.input_dim() != d) {
            return Err(CoreError::contract(
                "DriftModel: component input dimensions differ",
            ));
        }
        Ok(DriftModel {
            components,
            reports: Vec::new(),
        })
    }

    pub fn components(&self) -> &[Network] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Network {
        &self.components[k]
    }
}

impl VectorField for DriftModel {
    fn dim_in(&self) -> usize {
        self.components[0].input_dim()
    }
    fn dim_out(&self) -> usize {
        self.components.len()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        TL_WS.with(|ws| {
            let ws = &mut ws.borrow_mut();
            for (k, net) in self.components.iter().enumerate() {
                out[k] = net.eval(x, 0, ws);
            }
        });
    }
    fn jacobian_into(&self, x: &[f64], out: &mut Mat) {
        let d = self.dim_in();
        TL_WS.with(|ws| {
            let ws = &mut ws.borrow_mut();
            for (k, net) in self.components.iter().enumerate() {
                net.eval(x, 1, ws);
                for a in 0..d {
                    out[(k, a)] = ws.out_grad[a];
                }
            }
        });
    }
}

/// Fit the drift field: `dim_out` independent component regressions on
/// targets `y^n = (x^{n+1} - x^n)/dt`. Components train concurrently.
pub fn fit_drift(pairs: &RegressionPairs, arch: &ArchSpec, cfg: &FitConfig) -> Result<DriftModel> {
    if pairs.is_empty() {
        return Err(CoreError::contract("fit_drift: empty pair set"));
    }
    let strided = pairs.subsample(cfg.subsample_stride.max(1));
    let d_out = strided.target_dim();
    let d_in = strided.input_dim();
    let results: Vec<Result<(Network, FitReport)>> = parallel::map_collect(d_out, |k| {
        let targets: Vec<f64> = (0..strided.len()).map(|n| strided.target(n)[k]).collect();
        let data = ScalarData {
            inputs: strided.inputs_raw(),
            dim: d_in,
            targets: &targets,
            n: strided.len(),
        };
        let comp_seed = derive_seed(cfg.seed, k as u64);
        let net = arch.build(d_in)?.init(comp_seed, cfg.init);
        fit_scalar(&data, net, cfg, comp_seed)
    });
    let mut components = Vec::with_capacity(d_out);
    let mut reports = Vec::with_capacity(d_out);
    for r in results {
        let (net, rep) = r?;
        components.push(net);
        reports.push(rep);
    }
    let mut model = DriftModel::new(components)?;
    model.reports = reports;
    Ok(model)
}

/// Constant (state-independent) diffusion estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantDiffusion {
    pub matrix: Mat,
}

impl DiffusionField for ConstantDiffusion {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }
    fn eval_into(&self, _x: &[f64], out: &mut Mat) {
        out.data_mut().copy_from_slice(self.matrix.data());
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn constant_matrix(&self) -> Option<Mat> {
        Some(self.matrix.clone())
    }
    fn entry_grad_into(&self, _x: &[f64], _i: usize, _j: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn entry_second(&self, _x: &[f64], _i: usize, _j: usize) -> f64 {
        0.0
    }
}

/// State-dependent diffusion estimate: one network per upper-triangle entry,
/// the lower triangle aliasing its transpose so evaluations are symmetric by
/// construction.
#[derive(Clone, Debug)]
pub struct FieldDiffusion {
    dim: usize,
    entries: Vec<Network>,
    pub reports: Vec<FitReport>,
}

impl FieldDiffusion {
    pub fn new(dim: usize, entries: Vec<Network>) -> Result<Self> {
        if entries.len() != dim * (dim + 1) / 2 {
            return Err(CoreError::contract(format!(
                "FieldDiffusion: need {} upper-triangle entries, got {}",
                dim * (dim + 1) / 2,
                entries.len()
            )));
        }
        Ok(FieldDiffusion {
            dim,
            entries,
            reports: Vec::new(),
        })
    }

    fn tri_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * (i + 1) / 2 + j
    }

    pub fn entry_net(&self, i: usize, j: usize) -> &Network {
        &self.entries[self.tri_index(i, j)]
    }

    pub fn entries(&self) -> &[Network] {
        &self.entries
    }
}

impl DiffusionField for FieldDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: &[f64], out: &mut Mat) {
        TL_WS.with(|ws| {
            let ws = &mut ws.borrow_mut();
            for i in 0..self.dim {
                for j in i..self.dim {
                    let v = self.entries[self.tri_index(i, j)].eval(x, 0, ws);
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
            }
        });
    }
    fn is_constant(&self) -> bool {
        false
    }
    fn entry_grad_into(&self, x: &[f64], i: usize, j: usize, out: &mut [f64]) {
        TL_WS.with(|ws| {
            let ws = &mut ws.borrow_mut();
            self.entries[self.tri_index(i, j)].eval(x, 1, ws);
            out.copy_from_slice(&ws.out_grad[..self.dim]);
        });
    }
    fn entry_second(&self, x: &[f64], i: usize, j: usize) -> f64 {
        TL_WS.with(|ws| {
            let ws = &mut ws.borrow_mut();
            self.entries[self.tri_index(i, j)].eval(x, 2, ws);
            ws.out_hess[i * self.dim + j]
        })
    }
}

/// Fit `B(x) ~ (b b^T)(x)` entrywise: entry `(i, j)` regresses on targets
/// `(y_i - a_i(x))(y_j - a_j(x)) dt`. Only the upper triangle is trained;
/// `(j, i)` aliases `(i, j)`.
pub fn fit_diffusion_field(
    pairs: &RegressionPairs,
    drift: &dyn VectorField,
    dt: f64,
    arch: &ArchSpec,
    cfg: &FitConfig,
) -> Result<FieldDiffusion> {
    if pairs.is_empty() {
        return Err(CoreError::contract("fit_diffusion_field: empty pair set"));
    }
    let strided = pairs.subsample(cfg.subsample_stride.max(1));
    let residuals = drift_residuals(&strided, drift);
    let d = strided.target_dim();
    let d_in = strided.input_dim();
    let n = strided.len();
    let n_entries = d * (d + 1) / 2;
    let mut index_pairs = Vec::with_capacity(n_entries);
    for i in 0..d {
        for j in i..d {
            index_pairs.push((i, j));
        }
    }
    let results: Vec<Result<(Network, FitReport)>> = parallel::map_collect(n_entries, |e| {
        let (i, j) = index_pairs[e];
        let targets: Vec<f64> = (0..n)
            .map(|m| residuals[m * d + i] * residuals[m * d + j] * dt)
            .collect();
        let data = ScalarData {
            inputs: strided.inputs_raw(),
            dim: d_in,
            targets: &targets,
            n,
        };
        let entry_seed = derive_seed(cfg.seed, 0x1000 + e as u64);
        let net = arch.build(d_in)?.init(entry_seed, cfg.init);
        fit_scalar(&data, net, cfg, entry_seed)
    });
    let mut entries = Vec::with_capacity(n_entries);
    let mut reports = Vec::with_capacity(n_entries);
    for r in results {
        let (net, rep) = r?;
        entries.push(net);
        reports.push(rep);
    }
    let mut model = FieldDiffusion::new(d, entries)?;
    model.reports = reports;
    Ok(model)
}

fn drift_residuals(pairs: &RegressionPairs, drift: &dyn VectorField) -> Vec<f64> {
    let d = pairs.target_dim();
    let n = pairs.len();
    let rows = parallel::map_collect(n, |m| {
        let mut a = vec![0.0; d];
        drift.eval_into(pairs.input(m), &mut a);
        let t = pairs.target(m);
        for k in 0..d {
            a[k] = t[k] - a[k];
        }
        a
    });
    let mut flat = Vec::with_capacity(n * d);
    for r in rows {
        flat.extend_from_slice(&r);
    }
    flat
}

/// Constant-diffusion estimator from drift residuals:
/// `(dt/N) sum (y - a(x))(y - a(x))^T`, symmetrized and PSD-projected.
pub fn estimate_constant_diffusion(
    pairs: &RegressionPairs,
    drift: &dyn VectorField,
    dt: f64,
) -> Result<ConstantDiffusion> {
    if pairs.is_empty() {
        return Err(CoreError::contract(
            "estimate_constant_diffusion: empty pair set",
        ));
    }
    let d = pairs.target_dim();
    let n = pairs.len();
    let scale = dt / n as f64;
    let acc = parallel::indexed_accumulate(n, d * d, |m, buf| {
        let mut a = vec![0.0; d];
        drift.eval_into(pairs.input(m), &mut a);
        let t = pairs.target(m);
        for i in 0..d {
            let ri = t[i] - a[i];
            for j in 0..d {
                buf[i * d + j] += scale * ri * (t[j] - a[j]);
            }
        }
    });
    let raw = Mat::from_vec(d, d, acc);
    let sym = raw.symmetrized();
    let projected = psd_project(&sym)?;
    Ok(ConstantDiffusion { matrix: projected })
}

#[cfg(test)]
mod tests;
