//! Pipeline configuration: TOML files over named presets.
//!
//! A config file only needs the keys it wants to override; everything else
//! resolves from the preset selected by `problem` and `scale`. Unknown keys
//! are rejected. The resolved config is echoed into the run directory and
//! hashed; downstream stages refuse artifacts from a different hash unless
//! forced.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fp_core::nn::Activation;

/// Fully resolved configuration (every field concrete).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Config {
    pub problem: Problem,
    pub scale: Scale,
    pub seed: u64,
    pub langevin: LangevinParams,
    pub simulation: SimulationCfg,
    pub domain: DomainCfg,
    pub drift_fit: NetFitCfg,
    pub diffusion_fit: DiffusionFitCfg,
    pub fp_solve: FpSolveCfg,
    pub verify: VerifyCfg,
    pub report: ReportCfg,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    StudentT,
    Langevin,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Paper-scale settings; hours of compute.
    Paper,
    /// Minutes-scale settings used by CI and the acceptance suite.
    Desk,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LangevinParams {
    pub n_particles: usize,
    pub a0: f64,
    pub gamma: f64,
    pub k_b_t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimulationCfg {
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Also write a CSV copy of the trajectory (small runs only).
    pub csv: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DomainCfg {
    /// Explicit box.
    Fixed { lower: Vec<f64>, upper: Vec<f64> },
    /// Central quantile coverage of the data, per axis or jointly.
    Coverage { q: f64, joint: bool },
    /// Component-wise mean with per-block half-widths (Langevin convention:
    /// one half-width for velocities, one for displacements).
    MeanHalfwidth {
        velocity_halfwidth: f64,
        displacement_halfwidth: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetFitCfg {
    pub kind: NetKind,
    pub width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub iterations: u64,
    pub lr0: f64,
    pub lr_min: f64,
    pub cosine_schedule: bool,
    pub subsample_stride: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum NetKind {
    Mlp,
    Resnet,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiffusionFitCfg {
    pub mode: DiffusionMode,
    /// Field-mode network settings (ignored for constant modes).
    pub width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub iterations: u64,
    pub lr0: f64,
    pub lr_min: f64,
    pub cosine_schedule: bool,
    pub subsample_stride: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMode {
    /// One network per upper-triangle entry of `b b^T`.
    Field,
    /// Constant matrix from drift residuals.
    Constant,
    /// Constant matrix restricted to its diagonal.
    ConstantDiagonal,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FpSolveCfg {
    pub arch: DensityArch,
    pub lambda1: f64,
    pub lambda2: f64,
    pub interior: InteriorKind,
    /// Node count for full-loss evaluation in uniform mode.
    pub interior_n: usize,
    pub interior_batch: usize,
    pub boundary_n: usize,
    pub boundary_batch: usize,
    pub normalization: NormalizationKind,
    pub normalization_n_per_dim: usize,
    pub normalization_n: usize,
    pub iterations: u64,
    pub lr0: f64,
    pub lr_min: f64,
    pub cosine_schedule: bool,
    /// Train share of the in-domain data in weighted mode.
    pub train_fraction: f64,
    /// Solve with the analytic benchmark coefficients instead of the fitted
    /// models (isolates PDE-solver error from regression error).
    pub use_true_coefficients: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DensityArch {
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
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InteriorKind {
    Uniform,
    Weighted,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationKind {
    Gauss,
    Mc,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerifyCfg {
    pub chain_dt: f64,
    pub chain_steps: usize,
    pub burn_in_fraction: f64,
    pub marginal_grid: usize,
    pub marginal_mc: usize,
    pub reference_mc: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportCfg {
    pub heatmap_grid: usize,
    pub coords: (usize, usize),
}

// ---------------------------------------------------------------------------
// presets

pub fn preset(problem: Problem, scale: Scale) -> Config {
    match (problem, scale) {
        (Problem::StudentT, Scale::Desk) => student_desk(),
        (Problem::StudentT, Scale::Paper) => student_paper(),
        (Problem::Langevin, Scale::Desk) => langevin_desk(),
        (Problem::Langevin, Scale::Paper) => langevin_paper(),
    }
}

fn default_langevin_params() -> LangevinParams {
    LangevinParams {
        n_particles: 10,
        a0: 1.0,
        gamma: 0.5,
        k_b_t: 0.25,
    }
}

fn student_desk() -> Config {
    Config {
        problem: Problem::StudentT,
        scale: Scale::Desk,
        seed: 42,
        langevin: default_langevin_params(),
        simulation: SimulationCfg {
            dt: 0.05,
            n_steps: 200_000,
            burn_in: 10_000,
            csv: false,
        },
        domain: DomainCfg::Fixed {
            lower: vec![-4.0, -6.0],
            upper: vec![4.0, 6.0],
        },
        drift_fit: NetFitCfg {
            kind: NetKind::Resnet,
            width: 32,
            hidden_layers: 2,
            activation: Activation::Mish,
            batch_size: 1024,
            iterations: 4000,
            lr0: 1e-3,
            lr_min: 0.0,
            cosine_schedule: true,
            subsample_stride: 1,
        },
        diffusion_fit: DiffusionFitCfg {
            mode: DiffusionMode::Field,
            width: 24,
            hidden_layers: 2,
            activation: Activation::Mish,
            batch_size: 1024,
            iterations: 3000,
            lr0: 2e-3,
            lr_min: 0.0,
            cosine_schedule: true,
            subsample_stride: 1,
        },
        fp_solve: FpSolveCfg {
            arch: DensityArch::TwoLayerRelu3 { neurons: 256 },
            lambda1: 1.0,
            lambda2: 500.0,
            interior: InteriorKind::Weighted,
            interior_n: 100_000,
            interior_batch: 2048,
            boundary_n: 4096,
            boundary_batch: 512,
            normalization: NormalizationKind::Gauss,
            normalization_n_per_dim: 60,
            normalization_n: 65_536,
            iterations: 5000,
            lr0: 1e-2,
            lr_min: 0.0,
            cosine_schedule: true,
            train_fraction: 0.9,
            use_true_coefficients: false,
        },
        verify: VerifyCfg {
            chain_dt: 0.01,
            chain_steps: 2_000_000,
            burn_in_fraction: 0.05,
            marginal_grid: 41,
            marginal_mc: 20_000,
            reference_mc: 200_000,
        },
        report: ReportCfg {
            heatmap_grid: 80,
            coords: (0, 1),
        },
    }
}

fn student_paper() -> Config {
    let mut cfg = student_desk();
    cfg.scale = Scale::Paper;
    cfg.simulation.n_steps = 20_000_000;
    cfg.drift_fit = NetFitCfg {
        kind: NetKind::Resnet,
        width: 50,
        hidden_layers: 6,
        activation: Activation::Mish,
        batch_size: 10_000,
        iterations: 20_000,
        lr0: 1e-4,
        lr_min: 0.0,
        cosine_schedule: true,
        subsample_stride: 1,
    };
    cfg.diffusion_fit = DiffusionFitCfg {
        mode: DiffusionMode::Field,
        width: 50,
        hidden_layers: 6,
        activation: Activation::Mish,
        batch_size: 10_000,
        iterations: 20_000,
        lr0: 1e-4,
        lr_min: 0.0,
        cosine_schedule: true,
        subsample_stride: 1,
    };
    cfg.fp_solve = FpSolveCfg {
        arch: DensityArch::Resnet {
            width: 50,
            hidden_layers: 6,
            activation: Activation::Mish,
        },
        lambda1: 1.0,
        lambda2: 500.0,
        interior: InteriorKind::Weighted,
        interior_n: 1_000_000,
        interior_batch: 10_000,
        boundary_n: 40_000,
        boundary_batch: 4_000,
        normalization: NormalizationKind::Gauss,
        normalization_n_per_dim: 300,
        normalization_n: 1_048_576,
        iterations: 20_000,
        lr0: 1e-3,
        lr_min: 0.0,
        cosine_schedule: true,
        train_fraction: 0.9,
        use_true_coefficients: false,
    };
    cfg.verify.chain_steps = 10_000_000;
    cfg
}

fn langevin_desk() -> Config {
    Config {
        problem: Problem::Langevin,
        scale: Scale::Desk,
        seed: 42,
        langevin: LangevinParams {
            n_particles: 4,
            a0: 1.0,
            gamma: 0.5,
            k_b_t: 0.25,
        },
        simulation: SimulationCfg {
            dt: 5e-4,
            n_steps: 1_000_000,
            burn_in: 10_000,
            csv: false,
        },
        domain: DomainCfg::MeanHalfwidth {
            velocity_halfwidth: 1.0,
            displacement_halfwidth: 0.1,
        },
        drift_fit: NetFitCfg {
            kind: NetKind::Mlp,
            width: 48,
            hidden_layers: 2,
            activation: Activation::Relu,
            batch_size: 2048,
            iterations: 3000,
            lr0: 1e-3,
            lr_min: 1e-5,
            cosine_schedule: true,
            subsample_stride: 4,
        },
        diffusion_fit: DiffusionFitCfg {
            mode: DiffusionMode::ConstantDiagonal,
            width: 24,
            hidden_layers: 2,
            activation: Activation::Mish,
            batch_size: 1024,
            iterations: 1000,
            lr0: 1e-3,
            lr_min: 0.0,
            cosine_schedule: true,
            subsample_stride: 1,
        },
        fp_solve: FpSolveCfg {
            arch: DensityArch::Mlp {
                width: 48,
                hidden_layers: 3,
                activation: Activation::Relu3,
            },
            lambda1: 1.0,
            lambda2: 0.0,
            interior: InteriorKind::Weighted,
            interior_n: 100_000,
            interior_batch: 2048,
            boundary_n: 0,
            boundary_batch: 0,
            normalization: NormalizationKind::Mc,
            normalization_n_per_dim: 0,
            normalization_n: 131_072,
            iterations: 4000,
            lr0: 1e-3,
            lr_min: 1e-5,
            cosine_schedule: true,
            train_fraction: 0.9,
            use_true_coefficients: false,
        },
        verify: VerifyCfg {
            chain_dt: 5e-4,
            chain_steps: 1_000_000,
            burn_in_fraction: 0.05,
            marginal_grid: 25,
            marginal_mc: 20_000,
            reference_mc: 400_000,
        },
        report: ReportCfg {
            heatmap_grid: 60,
            coords: (0, 1),
        },
    }
}

fn langevin_paper() -> Config {
    let mut cfg = langevin_desk();
    cfg.scale = Scale::Paper;
    cfg.langevin = default_langevin_params();
    cfg.simulation.n_steps = 10_000_000;
    cfg.drift_fit = NetFitCfg {
        kind: NetKind::Mlp,
        width: 100,
        hidden_layers: 3,
        activation: Activation::Relu,
        batch_size: 10_000,
        iterations: 20_000,
        lr0: 1e-3,
        lr_min: 1e-5,
        cosine_schedule: true,
        subsample_stride: 1,
    };
    cfg.fp_solve.arch = DensityArch::Mlp {
        width: 100,
        hidden_layers: 3,
        activation: Activation::Relu3,
    };
    cfg.fp_solve.interior_batch = 10_000;
    cfg.fp_solve.iterations = 20_000;
    cfg.fp_solve.lr0 = 1e-4;
    cfg.fp_solve.lr_min = 1e-5;
    cfg.fp_solve.normalization_n = 1_048_576;
    cfg.verify.chain_steps = 10_000_000;
    cfg
}

// ---------------------------------------------------------------------------
// partial overlay parsed from TOML

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub problem: Option<Problem>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    pub langevin: Option<PartialLangevin>,
    pub simulation: Option<PartialSimulation>,
    pub domain: Option<DomainCfg>,
    pub drift_fit: Option<PartialNetFit>,
    pub diffusion_fit: Option<PartialDiffusionFit>,
    pub fp_solve: Option<PartialFpSolve>,
    pub verify: Option<PartialVerify>,
    pub report: Option<PartialReport>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialLangevin {
    pub n_particles: Option<usize>,
    pub a0: Option<f64>,
    pub gamma: Option<f64>,
    pub k_b_t: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSimulation {
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub csv: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialNetFit {
    pub kind: Option<NetKind>,
    pub width: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub activation: Option<Activation>,
    pub batch_size: Option<usize>,
    pub iterations: Option<u64>,
    pub lr0: Option<f64>,
    pub lr_min: Option<f64>,
    pub cosine_schedule: Option<bool>,
    pub subsample_stride: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialDiffusionFit {
    pub mode: Option<DiffusionMode>,
    pub width: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub activation: Option<Activation>,
    pub batch_size: Option<usize>,
    pub iterations: Option<u64>,
    pub lr0: Option<f64>,
    pub lr_min: Option<f64>,
    pub cosine_schedule: Option<bool>,
    pub subsample_stride: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialFpSolve {
    pub arch: Option<DensityArch>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub interior: Option<InteriorKind>,
    pub interior_n: Option<usize>,
    pub interior_batch: Option<usize>,
    pub boundary_n: Option<usize>,
    pub boundary_batch: Option<usize>,
    pub normalization: Option<NormalizationKind>,
    pub normalization_n_per_dim: Option<usize>,
    pub normalization_n: Option<usize>,
    pub iterations: Option<u64>,
    pub lr0: Option<f64>,
    pub lr_min: Option<f64>,
    pub cosine_schedule: Option<bool>,
    pub train_fraction: Option<f64>,
    pub use_true_coefficients: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialVerify {
    pub chain_dt: Option<f64>,
    pub chain_steps: Option<usize>,
    pub burn_in_fraction: Option<f64>,
    pub marginal_grid: Option<usize>,
    pub marginal_mc: Option<usize>,
    pub reference_mc: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialReport {
    pub heatmap_grid: Option<usize>,
    pub coords: Option<(usize, usize)>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

/// Resolve a partial overlay against the preset chosen by its
/// `problem`/`scale` keys (with optional command-line overrides applied on
/// top of the file's choices).
pub fn resolve(
    partial: PartialConfig,
    cli_scale: Option<Scale>,
    cli_seed: Option<u64>,
) -> Result<Config, String> {
    let problem = partial.problem.unwrap_or(Problem::StudentT);
    let scale = cli_scale.or(partial.scale).unwrap_or(Scale::Desk);
    let mut cfg = preset(problem, scale);
    if let Some(seed) = partial.seed {
        cfg.seed = seed;
    }
    if let Some(p) = partial.langevin {
        overlay!(cfg.langevin, p, n_particles, a0, gamma, k_b_t);
    }
    if let Some(p) = partial.simulation {
        overlay!(cfg.simulation, p, dt, n_steps, burn_in, csv);
    }
    if let Some(d) = partial.domain {
        cfg.domain = d;
    }
    if let Some(p) = partial.drift_fit {
        overlay!(
            cfg.drift_fit,
            p,
            kind,
            width,
            hidden_layers,
            activation,
            batch_size,
            iterations,
            lr0,
            lr_min,
            cosine_schedule,
            subsample_stride
        );
    }
    if let Some(p) = partial.diffusion_fit {
        overlay!(
            cfg.diffusion_fit,
            p,
            mode,
            width,
            hidden_layers,
            activation,
            batch_size,
            iterations,
            lr0,
            lr_min,
            cosine_schedule,
            subsample_stride
        );
    }
    if let Some(p) = partial.fp_solve {
        overlay!(
            cfg.fp_solve,
            p,
            arch,
            lambda1,
            lambda2,
            interior,
            interior_n,
            interior_batch,
            boundary_n,
            boundary_batch,
            normalization,
            normalization_n_per_dim,
            normalization_n,
            iterations,
            lr0,
            lr_min,
            cosine_schedule,
            train_fraction,
            use_true_coefficients
        );
    }
    if let Some(p) = partial.verify {
        overlay!(
            cfg.verify,
            p,
            chain_dt,
            chain_steps,
            burn_in_fraction,
            marginal_grid,
            marginal_mc,
            reference_mc
        );
    }
    if let Some(p) = partial.report {
        overlay!(cfg.report, p, heatmap_grid, coords);
    }
    if let Some(seed) = cli_seed {
        cfg.seed = seed;
    }
    validate(&cfg)?;
    Ok(cfg)
}

/// Validate a resolved config, reporting every violation with its key path.
pub fn validate(cfg: &Config) -> Result<(), String> {
    let mut errors = Vec::new();
    if !(cfg.simulation.dt > 0.0) {
        errors.push(format!("simulation.dt: must be positive, got {}", cfg.simulation.dt));
    }
    if cfg.simulation.n_steps < 1 {
        errors.push("simulation.n_steps: must be >= 1".to_string());
    }
    if !(cfg.fp_solve.lambda1 > 0.0) {
        errors.push(format!(
            "fp_solve.lambda1: must be > 0 (with lambda1 = 0 the zero function minimizes the \
             loss), got {}",
            cfg.fp_solve.lambda1
        ));
    }
    if cfg.fp_solve.lambda2 < 0.0 {
        errors.push("fp_solve.lambda2: must be >= 0".to_string());
    }
    if cfg.fp_solve.lambda2 > 0.0 && cfg.fp_solve.boundary_batch == 0 {
        errors.push(
            "fp_solve.boundary_batch: must be >= 1 when the boundary penalty is enabled"
                .to_string(),
        );
    }
    if !(cfg.fp_solve.train_fraction > 0.0 && cfg.fp_solve.train_fraction <= 1.0) {
        errors.push(format!(
            "fp_solve.train_fraction: must be in (0, 1], got {}",
            cfg.fp_solve.train_fraction
        ));
    }
    if cfg.drift_fit.batch_size == 0 {
        errors.push("drift_fit.batch_size: must be >= 1".to_string());
    }
    if cfg.drift_fit.iterations == 0 {
        errors.push("drift_fit.iterations: must be >= 1".to_string());
    }
    if let DomainCfg::Coverage { q, .. } = cfg.domain {
        if !(q > 0.0 && q <= 1.0) {
            errors.push(format!("domain.q: coverage must be in (0, 1], got {q}"));
        }
    }
    if let DomainCfg::Fixed { lower, upper } = &cfg.domain {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| l >= u) {
            errors.push("domain: fixed bounds must satisfy lower < upper per axis".to_string());
        }
    }
    if cfg.problem == Problem::Langevin && cfg.langevin.n_particles < 3 {
        errors.push(format!(
            "langevin.n_particles: the pair potential couples i-1 and i-2 neighbors; need M >= 3, \
             got {}",
            cfg.langevin.n_particles
        ));
    }
    if cfg.verify.burn_in_fraction < 0.0 || cfg.verify.burn_in_fraction >= 1.0 {
        errors.push("verify.burn_in_fraction: must be in [0, 1)".to_string());
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("\n"))
    }
}

pub fn parse_toml(text: &str) -> Result<PartialConfig, String> {
    toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
}

/// Stable short hash of the resolved configuration.
pub fn config_hash(cfg: &Config) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&canonical);
    hex::encode(&digest[..8])
}

pub fn to_toml(cfg: &Config) -> String {
    toml::to_string_pretty(cfg).expect("config serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_student_defaults() {
        let partial = parse_toml("").unwrap();
        let cfg = resolve(partial, None, None).unwrap();
        assert_eq!(cfg.problem, Problem::StudentT);
        assert_eq!(cfg.scale, Scale::Desk);
        assert_eq!(cfg.simulation.dt, 0.05);
        assert_eq!(cfg.fp_solve.lambda1, 1.0);
        assert_eq!(cfg.fp_solve.lambda2, 500.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_toml("nonsense_key = 4").unwrap_err();
        assert!(err.contains("nonsense_key"), "{err}");
        let err = parse_toml("[simulation]\ntypo_dt = 0.1").unwrap_err();
        assert!(err.contains("typo_dt"), "{err}");
    }

    #[test]
    fn negative_dt_names_the_key() {
        let partial = parse_toml("[simulation]\ndt = -0.5").unwrap();
        let err = resolve(partial, None, None).unwrap_err();
        assert!(err.contains("simulation.dt"), "{err}");
    }

    #[test]
    fn zero_lambda1_cites_degeneracy() {
        let partial = parse_toml("[fp_solve]\nlambda1 = 0.0").unwrap();
        let err = resolve(partial, None, None).unwrap_err();
        assert!(err.contains("fp_solve.lambda1"), "{err}");
        assert!(err.contains("zero function"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = resolve(PartialConfig::default(), None, None).unwrap();
        let b = resolve(PartialConfig::default(), None, None).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = resolve(PartialConfig::default(), None, Some(7)).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn round_trips_through_toml() {
        for problem in [Problem::StudentT, Problem::Langevin] {
            for scale in [Scale::Desk, Scale::Paper] {
                let cfg = preset(problem, scale);
                validate(&cfg).unwrap();
                let text = to_toml(&cfg);
                let partial = parse_toml(&text).unwrap();
                let back = resolve(partial, None, None).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn paper_presets_match_published_settings() {
        let s = preset(Problem::StudentT, Scale::Paper);
        assert_eq!(s.simulation.n_steps, 20_000_000);
        assert_eq!(s.drift_fit.width, 50);
        assert_eq!(s.drift_fit.hidden_layers, 6);
        assert_eq!(s.drift_fit.batch_size, 10_000);
        assert_eq!(s.drift_fit.iterations, 20_000);
        assert_eq!(s.fp_solve.normalization_n_per_dim, 300);
        let l = preset(Problem::Langevin, Scale::Paper);
        assert_eq!(l.langevin.n_particles, 10);
        assert_eq!(l.simulation.dt, 5e-4);
        assert_eq!(l.simulation.n_steps, 10_000_000);
        assert_eq!(l.fp_solve.lambda2, 0.0);
        assert_eq!(l.drift_fit.width, 100);
        assert_eq!(l.drift_fit.hidden_layers, 3);
    }
}
