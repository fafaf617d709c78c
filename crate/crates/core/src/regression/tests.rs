use approx::assert_relative_eq;
use rand::Rng;

use super::*;
use crate::fields::AnalyticVectorField;
use crate::rng::rng_from_seed;
use crate::sde::RegressionPairs;

fn linear_map_pairs(n: usize, seed: u64, noise: f64) -> RegressionPairs {
    // y = A x (+ noise), A = [[1.2, -0.7], [0.3, 0.5]]
    let mut rng = rng_from_seed(seed);
    let mut pairs = RegressionPairs::with_capacity(2, 2, n);
    for _ in 0..n {
        let x = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let mut y = [
            1.2 * x[0] - 0.7 * x[1],
            0.3 * x[0] + 0.5 * x[1],
        ];
        if noise > 0.0 {
            y[0] += noise * (rng.gen::<f64>() - 0.5);
            y[1] += noise * (rng.gen::<f64>() - 0.5);
        }
        pairs.push(&x, &y);
    }
    pairs
}

fn zero_drift() -> AnalyticVectorField<
    impl Fn(&[f64], &mut [f64]) + Send + Sync,
    impl Fn(&[f64], &mut Mat) + Send + Sync,
> {
    AnalyticVectorField {
        dim_in: 1,
        dim_out: 1,
        f: |_x: &[f64], out: &mut [f64]| out.fill(0.0),
        jac: |_x: &[f64], out: &mut Mat| out.fill(0.0),
    }
}

#[test]
fn drift_fit_recovers_noiseless_linear_map() {
    let pairs = linear_map_pairs(4096, 1, 0.0);
    let arch = ArchSpec::Mlp {
        width: 16,
        hidden_layers: 1,
        activation: Activation::Tanh,
    };
    let cfg = FitConfig {
        batch_size: 256,
        iterations: 3000,
        lr0: 2e-2,
        seed: 7,
        ..FitConfig::default()
    };
    let model = fit_drift(&pairs, &arch, &cfg).unwrap();
    // realizable regression: training MSE must collapse
    for rep in &model.reports {
        assert!(
            rep.final_loss < 1e-4,
            "final component loss {}",
            rep.final_loss
        );
    }
    // and the fitted field matches the map pointwise
    let mut out = vec![0.0; 2];
    model.eval_into(&[0.5, -0.25], &mut out);
    assert_relative_eq!(out[0], 1.2 * 0.5 + 0.7 * 0.25, epsilon = 0.02);
    assert_relative_eq!(out[1], 0.3 * 0.5 - 0.5 * 0.25, epsilon = 0.02);
}

#[test]
fn zero_targets_do_not_increase_realizable_floor() {
    let mut pairs = RegressionPairs::with_capacity(1, 1, 512);
    let mut rng = rng_from_seed(5);
    for _ in 0..512 {
        pairs.push(&[rng.gen::<f64>() * 2.0 - 1.0], &[0.0]);
    }
    let arch = ArchSpec::Mlp {
        width: 8,
        hidden_layers: 1,
        activation: Activation::Mish,
    };
    let cfg = FitConfig {
        batch_size: 128,
        iterations: 800,
        lr0: 1e-2,
        seed: 3,
        ..FitConfig::default()
    };
    let model = fit_drift(&pairs, &arch, &cfg).unwrap();
    // the zero-initialized net already achieves zero loss; training must not
    // do worse than the untrained initialization's loss
    let init_net = arch.build(1).unwrap().init(derive_seed(3, 0), cfg.init);
    let init_mse: f64 = (0..pairs.len())
        .map(|n| init_net.forward(pairs.input(n)).powi(2))
        .sum::<f64>()
        / pairs.len() as f64;
    assert!(
        model.reports[0].final_loss <= init_mse + 1e-12,
        "trained {} vs init {}",
        model.reports[0].final_loss,
        init_mse
    );
    assert!(model.reports[0].final_loss < 1e-5);
}

#[test]
fn diffusion_field_learns_identity_from_unit_noise() {
    // data from b = I, a = 0 at dt = 0.01: targets (y_i y_j) dt = xi_i xi_j
    let n = 100_000;
    let dt: f64 = 0.01;
    let mut rng = rng_from_seed(11);
    let mut pairs = RegressionPairs::with_capacity(2, 2, n);
    let amp = 1.0 / dt.sqrt();
    for _ in 0..n {
        let x = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let mut xi = [0.0; 2];
        crate::rng::fill_standard_normal(&mut rng, &mut xi);
        pairs.push(&x, &[amp * xi[0], amp * xi[1]]);
    }
    let drift = AnalyticVectorField {
        dim_in: 2,
        dim_out: 2,
        f: |_x: &[f64], out: &mut [f64]| out.fill(0.0),
        jac: |_x: &[f64], out: &mut Mat| out.fill(0.0),
    };
    let arch = ArchSpec::Mlp {
        width: 8,
        hidden_layers: 1,
        activation: Activation::Mish,
    };
    let cfg = FitConfig {
        batch_size: 1024,
        iterations: 1200,
        lr0: 5e-3,
        seed: 13,
        ..FitConfig::default()
    };
    let field = fit_diffusion_field(&pairs, &drift, dt, &arch, &cfg).unwrap();
    for p in [[0.0, 0.0], [0.5, -0.5], [-0.8, 0.3]] {
        let b = field.eval(&p);
        assert!((b[(0, 0)] - 1.0).abs() < 0.1, "b00 {}", b[(0, 0)]);
        assert!((b[(1, 1)] - 1.0).abs() < 0.1, "b11 {}", b[(1, 1)]);
        assert!(b[(0, 1)].abs() < 0.1, "b01 {}", b[(0, 1)]);
        // aliased storage: exact symmetry
        assert_eq!(b[(0, 1)].to_bits(), b[(1, 0)].to_bits());
    }
}

#[test]
fn diffusion_field_zero_targets_give_near_zero_field() {
    // deterministic data with exact drift: residuals vanish
    let pairs = linear_map_pairs(4096, 21, 0.0);
    let drift = AnalyticVectorField {
        dim_in: 2,
        dim_out: 2,
        f: |x: &[f64], out: &mut [f64]| {
            out[0] = 1.2 * x[0] - 0.7 * x[1];
            out[1] = 0.3 * x[0] + 0.5 * x[1];
        },
        jac: |_x: &[f64], out: &mut Mat| {
            out[(0, 0)] = 1.2;
            out[(0, 1)] = -0.7;
            out[(1, 0)] = 0.3;
            out[(1, 1)] = 0.5;
        },
    };
    let arch = ArchSpec::Mlp {
        width: 8,
        hidden_layers: 1,
        activation: Activation::Mish,
    };
    let cfg = FitConfig {
        batch_size: 512,
        iterations: 4000,
        lr0: 1e-2,
        seed: 4,
        init: InitScheme::Uniform(0.2),
        ..FitConfig::default()
    };
    let field = fit_diffusion_field(&pairs, &drift, 0.05, &arch, &cfg).unwrap();
    let mut rng = rng_from_seed(9);
    for _ in 0..20 {
        let p = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let b = field.eval(&p);
        for i in 0..2 {
            for j in 0..2 {
                assert!(b[(i, j)].abs() < 1e-3, "entry ({i},{j}) = {}", b[(i, j)]);
            }
        }
    }
}

#[test]
fn constant_estimator_zero_for_noise_free_data() {
    let mut pairs = RegressionPairs::with_capacity(1, 1, 100);
    for i in 0..100 {
        pairs.push(&[i as f64 * 0.01], &[0.0]);
    }
    let est = estimate_constant_diffusion(&pairs, &zero_drift(), 0.01).unwrap();
    assert_eq!(est.matrix[(0, 0)], 0.0);
}

#[test]
fn constant_estimator_recovers_squared_amplitude() {
    // 1-D, a = 0, b = 2, dt = 0.01: targets y = 2 xi / sqrt(dt), estimator
    // recovers b b^T = 4 within the CLT band
    let n = 1_000_000;
    let dt: f64 = 0.01;
    let mut rng = rng_from_seed(17);
    let mut pairs = RegressionPairs::with_capacity(1, 1, n);
    let amp = 2.0 / dt.sqrt();
    let mut xi = [0.0];
    for i in 0..n {
        crate::rng::fill_standard_normal(&mut rng, &mut xi);
        pairs.push(&[(i % 100) as f64 * 0.01], &[amp * xi[0]]);
    }
    let est = estimate_constant_diffusion(&pairs, &zero_drift(), dt).unwrap();
    assert!(
        (est.matrix[(0, 0)] - 4.0).abs() < 0.08,
        "estimate {}",
        est.matrix[(0, 0)]
    );
}

#[test]
fn constant_estimator_mean_over_seeds_within_clt_band() {
    let n = 100_000;
    let dt: f64 = 0.01;
    let amp = 2.0 / dt.sqrt();
    let n_seeds = 20;
    let mut mean = 0.0;
    for s in 0..n_seeds {
        let mut rng = rng_from_seed(1000 + s);
        let mut pairs = RegressionPairs::with_capacity(1, 1, n);
        let mut xi = [0.0];
        for _ in 0..n {
            crate::rng::fill_standard_normal(&mut rng, &mut xi);
            pairs.push(&[0.0], &[amp * xi[0]]);
        }
        mean += estimate_constant_diffusion(&pairs, &zero_drift(), dt)
            .unwrap()
            .matrix[(0, 0)];
    }
    mean /= n_seeds as f64;
    // var of a single estimate is 2 * 16 / n; 3 sigma band for the mean
    let band = 3.0 * 4.0 * (2.0 / n as f64).sqrt() / (n_seeds as f64).sqrt();
    assert!((mean - 4.0).abs() < band, "mean {mean}, band {band}");
}

#[test]
fn field_evaluations_are_psd_after_projection() {
    // random symmetric-ish field evaluations pass through psd_project and
    // stay PSD on a grid
    let mut rng = rng_from_seed(33);
    for _ in 0..50 {
        let mut m = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = rng.gen::<f64>() * 2.0 - 1.0;
            }
        }
        let sym = m.symmetrized();
        let p = psd_project(&sym).unwrap();
        let (w, _) = crate::linalg::sym_eigen(&p).unwrap();
        assert!(w.iter().all(|&v| v >= -1e-12), "eigs {w:?}");
    }
}
