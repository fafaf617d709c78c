//! Pipeline stages: simulate -> fit-drift -> fit-diffusion -> solve-fp ->
//! verify -> report, with artifacts on disk between stages.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use fp_core::fields::{DiffusionField, VectorField};
use fp_core::fp::{
    build_langevin_fp_operator, solve_density, split_rows, FpOperator, FpOperatorOps,
    InteriorSampler, LossBreakdown, LossConfig, SolveOptConfig,
};
use fp_core::linalg::Mat;
use fp_core::nn::checkpoint::{load_network, save_network};
use fp_core::nn::{InitScheme, Network};
use fp_core::regression::metrics::{relative_l2_error, Integrator};
use fp_core::regression::{
    estimate_constant_diffusion, fit_diffusion_field, fit_drift, ArchSpec, ConstantDiffusion,
    DriftModel, FieldDiffusion, FitConfig, FitReport,
};
use fp_core::rng::{derive_seed, fill_standard_normal, rng_from_seed};
use fp_core::sde::format::{write_csv, FpdHeader, FpdReader, FpdWriter, FPD_VERSION};
use fp_core::sde::langevin::{
    self, sde_model as langevin_sde_model, transformed_pairs, LangevinModel,
    LangevinTransformedDrift,
};
use fp_core::sde::student::{
    student_t_model, student_true_density, student_true_moments, StudentDiffusion, StudentDrift,
};
use fp_core::sde::{
    domain_from_data, make_pairs, simulate_into, DomainBox, DomainRule, RegressionPairs,
    TimeSeriesDataset, TrajectorySink,
};
use fp_core::verify::{
    marginal_density_mc, mc_normalization_constant, moment_stats, simulate_learned_chain,
    simulate_learned_langevin_chain, testset_relative_error, MomentStats, StreamingMoments,
};

use crate::artifacts::{
    read_json, record_timing, require_file, write_atomic, write_json_atomic, CliError, CliResult,
    Layout, RunLock,
};
use crate::config::{
    config_hash, to_toml, Config, DensityArch, DiffusionMode, DomainCfg, InteriorKind, NetKind,
    NormalizationKind, Problem,
};
use crate::report;

// seed-stream tags, one per stochastic stage
const TAG_SIM_INIT: u64 = 0x51;
const TAG_SIM: u64 = 0x52;
const TAG_DRIFT: u64 = 0xD8;
const TAG_DIFFUSION: u64 = 0xD1;
const TAG_SPLIT: u64 = 0x59;
const TAG_DENSITY_INIT: u64 = 0xDE;
const TAG_SOLVE: u64 = 0x50;
const TAG_CHAIN: u64 = 0xC4;
const TAG_MARGINAL: u64 = 0x3A;
const TAG_REFNORM: u64 = 0x8E;
const TAG_INTERIOR: u64 = 0xA7;
const TAG_BOUNDARY: u64 = 0xB0;
const TAG_NORM_MC: u64 = 0x4C;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Stage {
    Simulate,
    FitDrift,
    FitDiffusion,
    SolveFp,
    Verify,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::FitDrift => "fit-drift",
            Stage::FitDiffusion => "fit-diffusion",
            Stage::SolveFp => "solve-fp",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }
}

pub struct StageContext {
    pub cfg: Config,
    pub hash: String,
    pub layout: Layout,
    pub force: bool,
}

impl StageContext {
    pub fn new(cfg: Config, run_dir: &Path, force: bool) -> CliResult<Self> {
        let layout = Layout::new(run_dir);
        let hash = config_hash(&cfg);
        std::fs::create_dir_all(run_dir)?;
        write_atomic(&layout.config(), to_toml(&cfg).as_bytes())?;
        Ok(StageContext {
            cfg,
            hash,
            layout,
            force,
        })
    }

    fn check_hash(&self, artifact: &Path, found: &str) -> CliResult<()> {
        if found != self.hash && !self.force {
            return Err(CliError::ConfigMismatch {
                artifact: artifact.to_path_buf(),
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

pub fn run_stage(ctx: &StageContext, stage: Stage) -> CliResult<()> {
    let _lock = RunLock::acquire(&ctx.layout.run_dir)?;
    let t0 = Instant::now();
    match stage {
        Stage::Simulate => stage_simulate(ctx)?,
        Stage::FitDrift => stage_fit_drift(ctx)?,
        Stage::FitDiffusion => stage_fit_diffusion(ctx)?,
        Stage::SolveFp => stage_solve_fp(ctx)?,
        Stage::Verify => stage_verify(ctx)?,
        Stage::Report => stage_report(ctx)?,
    }
    record_timing(&ctx.layout, stage.name(), t0.elapsed().as_secs_f64())?;
    eprintln!(
        "[{}] done in {:.1}s",
        stage.name(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn run_all(ctx: &StageContext) -> CliResult<()> {
    for stage in [
        Stage::Simulate,
        Stage::FitDrift,
        Stage::FitDiffusion,
        Stage::SolveFp,
        Stage::Verify,
        Stage::Report,
    ] {
        run_stage(ctx, stage)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// artifact metadata

#[derive(Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub config_hash: String,
    pub dim: usize,
    pub n_states: usize,
    pub dt: f64,
    pub seed: u64,
    pub rng_algorithm: u32,
    pub moments: MomentStats,
}

#[derive(Serialize, Deserialize)]
pub struct DriftArtifact {
    pub config_hash: String,
    pub components: usize,
    pub input_dim: usize,
    pub arch: ArchSpec,
    pub reports: Vec<FitReport>,
}

#[derive(Serialize, Deserialize)]
pub struct DiffusionArtifact {
    pub config_hash: String,
    pub mode: DiffusionMode,
    pub dim: usize,
    /// Constant modes: the estimated matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Mat>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub reports: Vec<FitReport>,
}

#[derive(Serialize, Deserialize)]
pub struct SolveArtifact {
    pub config_hash: String,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub hessian_method: String,
    pub mass_estimate: f64,
    pub negative_fraction: f64,
    pub final_loss: LossBreakdown,
    pub loss_curve: Vec<(u64, LossBreakdown)>,
    pub used_true_coefficients: bool,
}

// ---------------------------------------------------------------------------
// simulate

struct TeeSink<'a> {
    writer: FpdWriter<std::io::BufWriter<std::fs::File>>,
    moments: &'a mut StreamingMoments,
}

impl TrajectorySink for TeeSink<'_> {
    fn push(&mut self, state: &[f64]) -> fp_core::Result<()> {
        self.moments.push(state);
        self.writer.push_state(state)
    }
}

fn build_model(cfg: &Config) -> CliResult<(fp_core::sde::SdeModel, Vec<f64>)> {
    match cfg.problem {
        Problem::StudentT => Ok((student_t_model(), vec![0.0, 0.0])),
        Problem::Langevin => {
            let p = langevin_params(cfg)?;
            let model = langevin_sde_model(&p);
            let m = p.n_particles;
            // velocities zero, displacements drawn around the equilibrium
            let mut x0 = vec![0.0; 2 * m];
            let mut rng = rng_from_seed(derive_seed(cfg.seed, TAG_SIM_INIT));
            let mut r0 = vec![0.0; m];
            fill_standard_normal(&mut rng, &mut r0);
            for (k, v) in r0.iter().enumerate() {
                x0[m + k] = 0.1 * v;
            }
            Ok((model, x0))
        }
    }
}

fn langevin_params(cfg: &Config) -> CliResult<LangevinModel> {
    LangevinModel::new(
        cfg.langevin.n_particles,
        cfg.langevin.a0,
        cfg.langevin.gamma,
        cfg.langevin.k_b_t,
    )
    .map_err(CliError::from)
}

fn stage_simulate(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let (model, x0) = build_model(cfg)?;
    let seed = derive_seed(cfg.seed, TAG_SIM);
    let header = FpdHeader {
        version: FPD_VERSION,
        dim: model.dim_state() as u32,
        count: cfg.simulation.n_steps as u64 + 1,
        dt: cfg.simulation.dt,
        seed,
        rng_algorithm: fp_core::rng::RNG_ALGORITHM_ID,
    };
    let tmp = ctx.layout.run_dir.join(".tmp-trajectory.fpd");
    let mut moments = StreamingMoments::new(model.dim_state(), 0);
    {
        let writer = FpdWriter::create(&tmp, header)?;
        let mut sink = TeeSink {
            writer,
            moments: &mut moments,
        };
        simulate_into(
            &model,
            &x0,
            cfg.simulation.dt,
            cfg.simulation.n_steps,
            cfg.simulation.burn_in,
            seed,
            &mut sink,
        )?;
        sink.writer.finish()?;
    }
    std::fs::rename(&tmp, ctx.layout.trajectory())?;
    let stats = TrajectoryStats {
        config_hash: ctx.hash.clone(),
        dim: model.dim_state(),
        n_states: cfg.simulation.n_steps + 1,
        dt: cfg.simulation.dt,
        seed,
        rng_algorithm: fp_core::rng::RNG_ALGORITHM_ID,
        moments: moments.finish()?,
    };
    write_json_atomic(&ctx.layout.trajectory_stats(), &stats)?;
    if cfg.simulation.csv {
        let ds = load_trajectory(ctx)?;
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf)?;
        write_atomic(&ctx.layout.trajectory_csv(), &buf)?;
    }
    Ok(())
}

fn load_trajectory(ctx: &StageContext) -> CliResult<TimeSeriesDataset> {
    require_file(&ctx.layout.trajectory())?;
    let stats: TrajectoryStats = read_json(&ctx.layout.trajectory_stats())?;
    ctx.check_hash(&ctx.layout.trajectory_stats(), &stats.config_hash)?;
    Ok(fp_core::sde::format::read_fpd(&ctx.layout.trajectory())?)
}

fn load_pairs(ctx: &StageContext, ds: &TimeSeriesDataset) -> CliResult<RegressionPairs> {
    match ctx.cfg.problem {
        Problem::StudentT => Ok(make_pairs(ds)?),
        Problem::Langevin => Ok(transformed_pairs(ds, ctx.cfg.langevin.n_particles)?),
    }
}

// ---------------------------------------------------------------------------
// fit stages

fn drift_arch(cfg: &Config) -> ArchSpec {
    match cfg.drift_fit.kind {
        NetKind::Mlp => ArchSpec::Mlp {
            width: cfg.drift_fit.width,
            hidden_layers: cfg.drift_fit.hidden_layers,
            activation: cfg.drift_fit.activation,
        },
        NetKind::Resnet => ArchSpec::Resnet {
            width: cfg.drift_fit.width,
            hidden_layers: cfg.drift_fit.hidden_layers,
            activation: cfg.drift_fit.activation,
        },
    }
}

fn stage_fit_drift(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let ds = load_trajectory(ctx)?;
    let pairs = load_pairs(ctx, &ds)?;
    let arch = drift_arch(cfg);
    let fit_cfg = FitConfig {
        batch_size: cfg.drift_fit.batch_size,
        iterations: cfg.drift_fit.iterations,
        lr0: cfg.drift_fit.lr0,
        lr_min: cfg.drift_fit.lr_min,
        cosine_schedule: cfg.drift_fit.cosine_schedule,
        seed: derive_seed(cfg.seed, TAG_DRIFT),
        subsample_stride: cfg.drift_fit.subsample_stride,
        epoch_shuffle: false,
        init: InitScheme::HeUniform,
    };
    let model = fit_drift(&pairs, &arch, &fit_cfg)?;
    std::fs::create_dir_all(ctx.layout.drift_dir())?;
    for (k, net) in model.components().iter().enumerate() {
        save_network(net, &ctx.layout.drift_component(k))?;
    }
    let artifact = DriftArtifact {
        config_hash: ctx.hash.clone(),
        components: model.components().len(),
        input_dim: model.dim_in(),
        arch,
        reports: model.reports.clone(),
    };
    write_json_atomic(&ctx.layout.drift_report(), &artifact)?;
    Ok(())
}

fn load_drift(ctx: &StageContext) -> CliResult<DriftModel> {
    require_file(&ctx.layout.drift_report())?;
    let artifact: DriftArtifact = read_json(&ctx.layout.drift_report())?;
    ctx.check_hash(&ctx.layout.drift_report(), &artifact.config_hash)?;
    let mut components = Vec::with_capacity(artifact.components);
    for k in 0..artifact.components {
        let path = ctx.layout.drift_component(k);
        require_file(&path)?;
        components.push(load_network(&path)?);
    }
    Ok(DriftModel::new(components)?)
}

fn stage_fit_diffusion(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let ds = load_trajectory(ctx)?;
    let pairs = load_pairs(ctx, &ds)?;
    let drift = load_drift(ctx)?;
    std::fs::create_dir_all(ctx.layout.diffusion_dir())?;
    let artifact = match cfg.diffusion_fit.mode {
        DiffusionMode::Field => {
            let arch = ArchSpec::Mlp {
                width: cfg.diffusion_fit.width,
                hidden_layers: cfg.diffusion_fit.hidden_layers,
                activation: cfg.diffusion_fit.activation,
            };
            let fit_cfg = FitConfig {
                batch_size: cfg.diffusion_fit.batch_size,
                iterations: cfg.diffusion_fit.iterations,
                lr0: cfg.diffusion_fit.lr0,
                lr_min: cfg.diffusion_fit.lr_min,
                cosine_schedule: cfg.diffusion_fit.cosine_schedule,
                seed: derive_seed(cfg.seed, TAG_DIFFUSION),
                subsample_stride: cfg.diffusion_fit.subsample_stride,
                epoch_shuffle: false,
                init: InitScheme::HeUniform,
            };
            let field = fit_diffusion_field(&pairs, &drift, ds.dt(), &arch, &fit_cfg)?;
            let d = field.dim();
            for i in 0..d {
                for j in i..d {
                    save_network(field.entry_net(i, j), &ctx.layout.diffusion_entry(i, j))?;
                }
            }
            DiffusionArtifact {
                config_hash: ctx.hash.clone(),
                mode: DiffusionMode::Field,
                dim: d,
                matrix: None,
                reports: field.reports.clone(),
            }
        }
        DiffusionMode::Constant | DiffusionMode::ConstantDiagonal => {
            let est = estimate_constant_diffusion(&pairs, &drift, ds.dt())?;
            let matrix = if cfg.diffusion_fit.mode == DiffusionMode::ConstantDiagonal {
                let d = est.matrix.rows();
                let mut diag = Mat::zeros(d, d);
                for k in 0..d {
                    diag[(k, k)] = est.matrix[(k, k)];
                }
                diag
            } else {
                est.matrix
            };
            DiffusionArtifact {
                config_hash: ctx.hash.clone(),
                mode: cfg.diffusion_fit.mode,
                dim: matrix.rows(),
                matrix: Some(matrix),
                reports: Vec::new(),
            }
        }
    };
    write_json_atomic(&ctx.layout.diffusion_report(), &artifact)?;
    Ok(())
}

enum LoadedDiffusion {
    Constant(ConstantDiffusion),
    Field(FieldDiffusion),
}

impl LoadedDiffusion {
    fn as_field(&self) -> &dyn DiffusionField {
        match self {
            LoadedDiffusion::Constant(c) => c,
            LoadedDiffusion::Field(f) => f,
        }
    }

    fn diag(&self) -> Vec<f64> {
        match self {
            LoadedDiffusion::Constant(c) => {
                (0..c.matrix.rows()).map(|k| c.matrix[(k, k)]).collect()
            }
            LoadedDiffusion::Field(_) => panic!("diag only for constant diffusion"),
        }
    }
}

fn load_diffusion(ctx: &StageContext) -> CliResult<LoadedDiffusion> {
    require_file(&ctx.layout.diffusion_report())?;
    let artifact: DiffusionArtifact = read_json(&ctx.layout.diffusion_report())?;
    ctx.check_hash(&ctx.layout.diffusion_report(), &artifact.config_hash)?;
    match artifact.mode {
        DiffusionMode::Field => {
            let d = artifact.dim;
            let mut entries = Vec::with_capacity(d * (d + 1) / 2);
            for i in 0..d {
                for j in i..d {
                    let path = ctx.layout.diffusion_entry(i, j);
                    require_file(&path)?;
                    entries.push(load_network(&path)?);
                }
            }
            Ok(LoadedDiffusion::Field(FieldDiffusion::new(d, entries)?))
        }
        _ => {
            let matrix = artifact
                .matrix
                .ok_or_else(|| CliError::Runtime("diffusion artifact lacks matrix".into()))?;
            Ok(LoadedDiffusion::Constant(ConstantDiffusion { matrix }))
        }
    }
}

// ---------------------------------------------------------------------------
// solve

/// Row-major data rows in the density coordinates (raw states for the
/// Student problem, transformed `(v, d)` rows for the chain).
fn density_rows(ctx: &StageContext, ds: &TimeSeriesDataset) -> (Vec<f64>, usize) {
    match ctx.cfg.problem {
        Problem::StudentT => {
            let d = ds.dim();
            let n = ds.n_states();
            let mut rows = vec![0.0; n * d];
            for i in 0..n {
                ds.state_into(i, &mut rows[i * d..(i + 1) * d]);
            }
            (rows, d)
        }
        Problem::Langevin => {
            let m = ctx.cfg.langevin.n_particles;
            let dim = 2 * m - 1;
            let n = ds.n_states();
            let mut rows = vec![0.0; n * dim];
            let mut state = vec![0.0; 2 * m];
            for i in 0..n {
                ds.state_into(i, &mut state);
                rows[i * dim..i * dim + m].copy_from_slice(&state[..m]);
                for j in 0..m - 1 {
                    rows[i * dim + m + j] = state[m + j + 1] - state[m + j];
                }
            }
            (rows, dim)
        }
    }
}

fn resolve_domain(ctx: &StageContext, rows: &[f64], dim: usize) -> CliResult<DomainBox> {
    let cfg = &ctx.cfg;
    match &cfg.domain {
        DomainCfg::Fixed { lower, upper } => {
            if lower.len() != dim {
                return Err(CliError::InvalidConfig(format!(
                    "domain: fixed bounds have dimension {}, problem needs {dim}",
                    lower.len()
                )));
            }
            Ok(DomainBox::new(lower.clone(), upper.clone())?)
        }
        DomainCfg::Coverage { q, joint } => {
            let columns: Vec<Vec<f64>> = (0..dim)
                .map(|k| {
                    (0..rows.len() / dim)
                        .map(|i| rows[i * dim + k])
                        .collect::<Vec<f64>>()
                })
                .collect();
            let ds = TimeSeriesDataset::from_columns(columns, cfg.simulation.dt, 0);
            Ok(domain_from_data(&ds, &DomainRule::Coverage { q: *q, joint: *joint })?)
        }
        DomainCfg::MeanHalfwidth {
            velocity_halfwidth,
            displacement_halfwidth,
        } => {
            let halfwidths = match cfg.problem {
                Problem::Langevin => {
                    let m = cfg.langevin.n_particles;
                    let mut hw = vec![*velocity_halfwidth; m];
                    hw.extend(std::iter::repeat(*displacement_halfwidth).take(m - 1));
                    hw
                }
                Problem::StudentT => vec![*velocity_halfwidth; dim],
            };
            let columns: Vec<Vec<f64>> = (0..dim)
                .map(|k| {
                    (0..rows.len() / dim)
                        .map(|i| rows[i * dim + k])
                        .collect::<Vec<f64>>()
                })
                .collect();
            let ds = TimeSeriesDataset::from_columns(columns, cfg.simulation.dt, 0);
            Ok(domain_from_data(&ds, &DomainRule::MeanHalfwidth { halfwidths })?)
        }
    }
}

/// The assembled operator plus everything the solver needs to know about it.
enum Operator {
    General(FpOperator),
    Langevin(fp_core::fp::LangevinFpOperator),
}

impl Operator {
    fn ops(&self) -> &dyn FpOperatorOps {
        match self {
            Operator::General(op) => op,
            Operator::Langevin(op) => op,
        }
    }
}

fn assemble_operator(ctx: &StageContext) -> CliResult<Operator> {
    let cfg = &ctx.cfg;
    match (cfg.problem, cfg.fp_solve.use_true_coefficients) {
        (Problem::StudentT, true) => Ok(Operator::General(FpOperator::new(
            Box::new(StudentDrift),
            Box::new(StudentDiffusion::new()),
        )?)),
        (Problem::StudentT, false) => {
            let drift = load_drift(ctx)?;
            let diffusion = load_diffusion(ctx)?;
            let diffusion: Box<dyn DiffusionField> = match diffusion {
                LoadedDiffusion::Constant(c) => Box::new(c),
                LoadedDiffusion::Field(f) => Box::new(f),
            };
            Ok(Operator::General(FpOperator::new(Box::new(drift), diffusion)?))
        }
        (Problem::Langevin, true) => {
            let params = langevin_params(ctx)?;
            Ok(Operator::Langevin(build_langevin_fp_operator(
                Box::new(LangevinTransformedDrift { params }),
                params.true_diffusion_diag(),
                params.n_particles,
            )?))
        }
        (Problem::Langevin, false) => {
            let drift = load_drift(ctx)?;
            let diffusion = load_diffusion(ctx)?;
            Ok(Operator::Langevin(build_langevin_fp_operator(
                Box::new(drift),
                diffusion.diag().iter().map(|v| v.max(0.0)).collect(),
                ctx.cfg.langevin.n_particles,
            )?))
        }
    }
}

fn langevin_params(ctx: &StageContext) -> CliResult<LangevinModel> {
    LangevinModel::new(
        ctx.cfg.langevin.n_particles,
        ctx.cfg.langevin.a0,
        ctx.cfg.langevin.gamma,
        ctx.cfg.langevin.k_b_t,
    )
    .map_err(CliError::from)
}

fn density_arch(ctx: &StageContext, dim: usize) -> CliResult<Network> {
    let net = match &ctx.cfg.fp_solve.arch {
        DensityArch::Mlp {
            width,
            hidden_layers,
            activation,
        } => Network::feedforward(dim, vec![*width; *hidden_layers], *activation, false)?,
        DensityArch::Resnet {
            width,
            hidden_layers,
            activation,
        } => Network::feedforward(dim, vec![*width; *hidden_layers], *activation, true)?,
        DensityArch::TwoLayerRelu3 { neurons } => Network::two_layer_relu3(dim, *neurons, None)?,
    };
    Ok(net.init(
        derive_seed(ctx.cfg.seed, TAG_DENSITY_INIT),
        InitScheme::HeUniform,
    ))
}

fn stage_solve_fp(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let ds = load_trajectory(ctx)?;
    let (rows, dim) = density_rows(ctx, &ds);
    let domain = resolve_domain(ctx, &rows, dim)?;
    let op = assemble_operator(ctx)?;
    let net = density_arch(ctx, dim)?;

    let interior = match cfg.fp_solve.interior {
        InteriorKind::Uniform => InteriorSampler::Uniform {
            n: cfg.fp_solve.interior_n,
            seed: derive_seed(cfg.seed, TAG_INTERIOR),
        },
        InteriorKind::Weighted => {
            let (train, _test) = split_rows(
                &rows,
                dim,
                cfg.fp_solve.train_fraction,
                derive_seed(cfg.seed, TAG_SPLIT),
            );
            InteriorSampler::weighted_from_rows(
                &train,
                dim,
                &domain,
                derive_seed(cfg.seed, TAG_INTERIOR),
            )?
        }
    };
    let normalization = match cfg.fp_solve.normalization {
        NormalizationKind::Gauss => Integrator::Gauss {
            n_per_dim: cfg.fp_solve.normalization_n_per_dim,
        },
        NormalizationKind::Mc => Integrator::Mc {
            n: cfg.fp_solve.normalization_n,
            seed: derive_seed(cfg.seed, TAG_NORM_MC),
        },
    };
    let loss_cfg = LossConfig {
        lambda1: cfg.fp_solve.lambda1,
        lambda2: cfg.fp_solve.lambda2,
        interior,
        normalization,
        boundary_n: cfg.fp_solve.boundary_n,
        boundary_seed: derive_seed(cfg.seed, TAG_BOUNDARY),
        interior_batch: cfg.fp_solve.interior_batch,
        boundary_batch: cfg.fp_solve.boundary_batch,
    };
    let opt = SolveOptConfig {
        iterations: cfg.fp_solve.iterations,
        lr0: cfg.fp_solve.lr0,
        lr_min: cfg.fp_solve.lr_min,
        cosine: cfg.fp_solve.cosine_schedule,
        seed: derive_seed(cfg.seed, TAG_SOLVE),
    };
    let est = solve_density(op.ops(), &domain, net, &loss_cfg, &opt)?;
    save_network(&est.network, &ctx.layout.density())?;
    let artifact = SolveArtifact {
        config_hash: ctx.hash.clone(),
        domain_lower: domain.lower().to_vec(),
        domain_upper: domain.upper().to_vec(),
        hessian_method: est.diagnostics.hessian_method.clone(),
        mass_estimate: est.diagnostics.mass_estimate,
        negative_fraction: est.diagnostics.negative_fraction,
        final_loss: est.diagnostics.final_loss,
        loss_curve: est.diagnostics.loss_curve.clone(),
        used_true_coefficients: cfg.fp_solve.use_true_coefficients,
    };
    write_json_atomic(&ctx.layout.solve_report(), &artifact)?;
    Ok(())
}

pub fn load_solution(ctx: &StageContext) -> CliResult<(Network, DomainBox, SolveArtifact)> {
    require_file(&ctx.layout.density())?;
    let artifact: SolveArtifact = read_json(&ctx.layout.solve_report())?;
    ctx.check_hash(&ctx.layout.solve_report(), &artifact.config_hash)?;
    let net = load_network(&ctx.layout.density())?;
    let domain = DomainBox::new(artifact.domain_lower.clone(), artifact.domain_upper.clone())?;
    Ok((net, domain, artifact))
}

// ---------------------------------------------------------------------------
// verify and report

#[derive(Serialize, Deserialize)]
pub struct StatisticsRow {
    pub label: String,
    pub dt: Option<f64>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct VerifyArtifact {
    pub config_hash: String,
    pub rows: Vec<StatisticsRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_rel_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub testset_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_marginal_peak: Option<f64>,
    pub mass_estimate: f64,
    pub negative_fraction: f64,
}

fn stats_row(label: &str, dt: Option<f64>, stats: &MomentStats) -> StatisticsRow {
    let d = stats.mean.len();
    StatisticsRow {
        label: label.to_string(),
        dt,
        mean: stats.mean.clone(),
        covariance: (0..d)
            .map(|i| (0..d).map(|j| stats.covariance[(i, j)]).collect())
            .collect(),
    }
}

fn mat_row(label: &str, dt: Option<f64>, mean: &[f64], cov: &Mat) -> StatisticsRow {
    StatisticsRow {
        label: label.to_string(),
        dt,
        mean: mean.to_vec(),
        covariance: (0..cov.rows())
            .map(|i| (0..cov.cols()).map(|j| cov[(i, j)]).collect())
            .collect(),
    }
}

fn stage_verify(ctx: &StageContext) -> CliResult<()> {
    match ctx.cfg.problem {
        Problem::StudentT => verify_student(ctx),
        Problem::Langevin => verify_langevin(ctx),
    }
}

fn verify_student(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let (net, domain, solve) = load_solution(ctx)?;
    let traj_stats: TrajectoryStats = read_json(&ctx.layout.trajectory_stats())?;
    ctx.check_hash(&ctx.layout.trajectory_stats(), &traj_stats.config_hash)?;

    let mut rows = Vec::new();
    let (true_mean, true_cov) = student_true_moments();
    rows.push(mat_row("ground-truth", None, &true_mean, &true_cov));
    rows.push(stats_row(
        "em-chain",
        Some(traj_stats.dt),
        &traj_stats.moments,
    ));

    // learned-coefficient chain (or the exact model when solving with true
    // coefficients)
    let chain_seed = derive_seed(cfg.seed, TAG_CHAIN);
    let chain = if cfg.fp_solve.use_true_coefficients {
        fp_core::sde::simulate(
            &student_t_model(),
            &[0.0, 0.0],
            cfg.verify.chain_dt,
            cfg.verify.chain_steps,
            chain_seed,
        )?
    } else {
        let drift = load_drift(ctx)?;
        let diffusion = load_diffusion(ctx)?;
        simulate_learned_chain(
            &drift,
            diffusion.as_field(),
            &[0.0, 0.0],
            cfg.verify.chain_dt,
            cfg.verify.chain_steps,
            chain_seed,
        )?
    };
    let burn = (chain.n_states() as f64 * cfg.verify.burn_in_fraction) as usize;
    let chain_stats = moment_stats(&chain, burn)?;
    rows.push(stats_row(
        "learned-chain",
        Some(cfg.verify.chain_dt),
        &chain_stats,
    ));

    let rel = relative_l2_error(
        |x: &[f64], out: &mut [f64]| out[0] = student_true_density(x),
        |x: &[f64], out: &mut [f64]| out[0] = net.forward(x),
        1,
        &domain,
        &Integrator::Gauss { n_per_dim: 100 },
    )?;

    std::fs::create_dir_all(ctx.layout.verify_dir())?;
    let artifact = VerifyArtifact {
        config_hash: ctx.hash.clone(),
        rows,
        density_rel_l2: Some(rel),
        testset_rel_error: None,
        velocity_marginal_peak: None,
        mass_estimate: solve.mass_estimate,
        negative_fraction: solve.negative_fraction,
    };
    write_json_atomic(&ctx.layout.verify_stats(), &artifact)?;
    Ok(())
}

fn verify_langevin(ctx: &StageContext) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let params = langevin_params(ctx)?;
    let m = params.n_particles;
    let dim = 2 * m - 1;
    let (net, domain, solve) = load_solution(ctx)?;
    let ds = load_trajectory(ctx)?;
    let (rows_data, _) = density_rows(ctx, &ds);

    // statistics of the transformed data chain
    let n = rows_data.len() / dim;
    let columns: Vec<Vec<f64>> = (0..dim)
        .map(|k| (0..n).map(|i| rows_data[i * dim + k]).collect())
        .collect();
    let transformed = TimeSeriesDataset::from_columns(columns, ds.dt(), ds.seed());
    let em_stats = moment_stats(&transformed, 0)?;

    // learned (or exact) chain in transformed coordinates
    let x0 = transformed.state(0);
    let chain_seed = derive_seed(cfg.seed, TAG_CHAIN);
    let chain = if cfg.fp_solve.use_true_coefficients {
        simulate_learned_langevin_chain(
            &LangevinTransformedDrift { params },
            &params.true_diffusion_diag(),
            &x0,
            cfg.verify.chain_dt,
            cfg.verify.chain_steps,
            chain_seed,
        )?
    } else {
        let drift = load_drift(ctx)?;
        let diffusion = load_diffusion(ctx)?;
        simulate_learned_langevin_chain(
            &drift,
            &diffusion.diag(),
            &x0,
            cfg.verify.chain_dt,
            cfg.verify.chain_steps,
            chain_seed,
        )?
    };
    let burn = (chain.n_states() as f64 * cfg.verify.burn_in_fraction) as usize;
    let chain_stats = moment_stats(&chain, burn)?;

    let rows = vec![
        stats_row("em-chain-transformed", Some(ds.dt()), &em_stats),
        stats_row("learned-chain", Some(cfg.verify.chain_dt), &chain_stats),
    ];

    // reference density normalized over the box
    let (a0, kbt) = (params.a0, params.k_b_t);
    let gibbs = move |x: &[f64]| {
        langevin::lj_gibbs_density_unnormalized(m, a0, kbt, &x[..m], &x[m..]).unwrap_or(0.0)
    };
    let c = mc_normalization_constant(
        gibbs,
        &domain,
        cfg.verify.reference_mc,
        derive_seed(cfg.seed, TAG_REFNORM),
    )?;
    let reference = move |x: &[f64]| c * gibbs(x);

    // held-out test rows (same split as training)
    let (_train, test) = split_rows(
        &rows_data,
        dim,
        cfg.fp_solve.train_fraction,
        derive_seed(cfg.seed, TAG_SPLIT),
    );
    let in_domain: Vec<f64> = test
        .chunks_exact(dim)
        .filter(|r| domain.contains(r))
        .flat_map(|r| r.iter().copied())
        .collect();
    let testset = testset_relative_error(
        |x: &[f64]| net.forward(x),
        &reference,
        &in_domain,
        dim,
    )?;

    // marginal curves with reference overlays
    std::fs::create_dir_all(ctx.layout.verify_dir())?;
    let mut velocity_peak = f64::MIN;
    let marg_seed = derive_seed(cfg.seed, TAG_MARGINAL);
    for k in 0..dim {
        let label = if k < m {
            format!("v{}", k + 1)
        } else {
            format!("d{}", k - m + 1)
        };
        let grid: Vec<f64> = (0..cfg.verify.marginal_grid)
            .map(|i| {
                domain.lower()[k]
                    + domain.side(k) * i as f64 / (cfg.verify.marginal_grid - 1) as f64
            })
            .collect();
        let est_curve = marginal_density_mc(
            |x: &[f64]| net.forward(x),
            k,
            &grid,
            cfg.verify.marginal_mc,
            derive_seed(marg_seed, k as u64),
            &domain,
        )?;
        let ref_curve = marginal_density_mc(
            &reference,
            k,
            &grid,
            cfg.verify.marginal_mc,
            derive_seed(marg_seed, 1000 + k as u64),
            &domain,
        )?;
        if k < m {
            velocity_peak = velocity_peak.max(
                est_curve
                    .values
                    .iter()
                    .cloned()
                    .fold(f64::MIN, f64::max),
            );
        }
        report::write_marginal_artifacts(ctx, &label, &est_curve, &ref_curve)?;
    }

    let artifact = VerifyArtifact {
        config_hash: ctx.hash.clone(),
        rows,
        density_rel_l2: None,
        testset_rel_error: Some(testset),
        velocity_marginal_peak: Some(velocity_peak),
        mass_estimate: solve.mass_estimate,
        negative_fraction: solve.negative_fraction,
    };
    write_json_atomic(&ctx.layout.verify_stats(), &artifact)?;
    Ok(())
}

fn stage_report(ctx: &StageContext) -> CliResult<()> {
    report::write_report(ctx)
}

// re-exports used by report.rs
pub(crate) use report::ReportInputs;

pub(crate) fn report_inputs(ctx: &StageContext) -> CliResult<ReportInputs> {
    let (net, domain, solve) = load_solution(ctx)?;
    let verify: VerifyArtifact = read_json(&ctx.layout.verify_stats())?;
    ctx.check_hash(&ctx.layout.verify_stats(), &verify.config_hash)?;
    Ok(ReportInputs {
        net: Arc::new(net),
        domain,
        solve,
        verify,
    })
}
