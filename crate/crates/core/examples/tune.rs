//! Scratch harness for sizing the desk-scale experiments. Not part of the
//! test suite; run with `cargo run --release -p fp-core --example tune -- <which>`.

use std::time::Instant;

use fp_core::fields::VectorField;
use fp_core::fp::{
    solve_density, FpOperator, InteriorSampler, LossConfig, SolveOptConfig,
};
use fp_core::nn::{Activation, InitScheme, Network};
use fp_core::regression::metrics::{relative_l2_error, Integrator};
use fp_core::regression::{estimate_constant_diffusion, fit_drift, ArchSpec, FitConfig};
use fp_core::sde::langevin::{transformed_pairs, LangevinModel, LangevinTransformedDrift};
use fp_core::sde::student::{student_t_model, student_true_density, StudentDrift, StudentDiffusion};
use fp_core::sde::{domain_from_data, make_pairs, simulate_with_burn_in, DomainBox, DomainRule};
use fp_core::verify::moment_stats;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".to_string());
    match which.as_str() {
        "chain" => chain_stats(),
        "drift" => drift_fit(),
        "langevin-b" => langevin_diffusion(),
        "solve-true" => solve_true(),
        "langevin-pipe" => langevin_pipe(),
        "solve-ou" => solve_ou(),
        "solve-ou2" => solve_ou2(),
        _ => {
            chain_stats();
            drift_fit();
            langevin_diffusion();
        }
    }
}

fn chain_stats() {
    let t0 = Instant::now();
    let model = student_t_model();
    let ds = simulate_with_burn_in(&model, &[0.0, 0.0], 0.05, 2_000_000, 10_000, 42).unwrap();
    let stats = moment_stats(&ds, 0).unwrap();
    println!(
        "chain: {:.1}s mean=({:.4},{:.4}) cov=[[{:.4},{:.4}],[{:.4},{:.4}]]",
        t0.elapsed().as_secs_f64(),
        stats.mean[0],
        stats.mean[1],
        stats.covariance[(0, 0)],
        stats.covariance[(0, 1)],
        stats.covariance[(1, 0)],
        stats.covariance[(1, 1)],
    );
    println!(
        "  targets 1.127 0.499 4.398; ratios {:.3} {:.3} {:.3}",
        stats.covariance[(0, 0)] / 1.127,
        stats.covariance[(0, 1)] / 0.499,
        stats.covariance[(1, 1)] / 4.398
    );
}

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn drift_fit() {
    let t0 = Instant::now();
    let model = student_t_model();
    let ds = simulate_with_burn_in(&model, &[0.0, 0.0], 0.05, 200_000, 10_000, 7).unwrap();
    let pairs = make_pairs(&ds).unwrap();
    println!("drift: sim+pairs {:.1}s ({} pairs)", t0.elapsed().as_secs_f64(), pairs.len());
    let arch = ArchSpec::Resnet {
        width: 32,
        hidden_layers: env_usize("DEPTH", 3),
        activation: Activation::Mish,
    };
    let cfg = FitConfig {
        batch_size: env_usize("BATCH", 2048),
        iterations: env_usize("ITERS", 4000) as u64,
        lr0: env_f64("LR", 2e-3),
        seed: 11,
        ..FitConfig::default()
    };
    println!("  config: {arch:?} batch {} iters {} lr {}", cfg.batch_size, cfg.iterations, cfg.lr0);
    let t1 = Instant::now();
    let drift = fit_drift(&pairs, &arch, &cfg).unwrap();
    let fit_time = t1.elapsed().as_secs_f64();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let err = relative_l2_error(
        |x: &[f64], out: &mut [f64]| StudentDrift.eval_into(x, out),
        |x: &[f64], out: &mut [f64]| drift.eval_into(x, out),
        2,
        &domain,
        &Integrator::Gauss { n_per_dim: 100 },
    )
    .unwrap();
    let inner = DomainBox::new(vec![-2.0, -3.0], vec![2.0, 3.0]).unwrap();
    let err_inner = relative_l2_error(
        |x: &[f64], out: &mut [f64]| StudentDrift.eval_into(x, out),
        |x: &[f64], out: &mut [f64]| drift.eval_into(x, out),
        2,
        &inner,
        &Integrator::Gauss { n_per_dim: 100 },
    )
    .unwrap();
    println!(
        "drift: fit {:.1}s, rel L2 = {:.4} (inner box {:.4}) (losses {:?})",
        fit_time,
        err,
        err_inner,
        drift.reports.iter().map(|r| r.final_loss).collect::<Vec<_>>()
    );
}

fn langevin_diffusion() {
    let t0 = Instant::now();
    let params = LangevinModel::new(4, 1.0, 0.5, 0.25).unwrap();
    let model = fp_core::sde::langevin::sde_model(&params);
    let mut x0 = vec![0.0; 8];
    // paper-style start: v = 0, r ~ N(0, 0.01)
    let mut rng = fp_core::rng::rng_from_seed(1);
    let mut r0 = vec![0.0; 4];
    fp_core::rng::fill_standard_normal(&mut rng, &mut r0);
    for (k, v) in r0.iter().enumerate() {
        x0[4 + k] = 0.1 * v;
    }
    let ds = simulate_with_burn_in(&model, &x0, 5e-4, 1_000_000, 10_000, 2).unwrap();
    let pairs = transformed_pairs(&ds, 4).unwrap();
    let exact = LangevinTransformedDrift { params };
    let est = estimate_constant_diffusion(&pairs, &exact, 5e-4).unwrap();
    print!("langevin-b: {:.1}s diag = ", t0.elapsed().as_secs_f64());
    for k in 0..8 {
        print!("{:.5} ", est.matrix[(k, k)]);
    }
    println!("(target 0.25 on velocity block)");
}

fn solve_ou() {
    use fp_core::fields::AnalyticVectorField;
    use fp_core::linalg::Mat;
    use fp_core::regression::ConstantDiffusion;
    let t0 = Instant::now();
    let drift = AnalyticVectorField {
        dim_in: 1,
        dim_out: 1,
        f: |x: &[f64], out: &mut [f64]| out[0] = -x[0],
        jac: |_x: &[f64], out: &mut Mat| out[(0, 0)] = -1.0,
    };
    let op = FpOperator::new(
        Box::new(drift),
        Box::new(ConstantDiffusion { matrix: Mat::identity(1) }),
    )
    .unwrap();
    let domain = DomainBox::new(vec![-3.0], vec![3.0]).unwrap();
    let net = Network::feedforward(1, vec![16, 16], Activation::Tanh, false)
        .unwrap()
        .init(5, InitScheme::HeUniform);
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 500.0,
        interior: InteriorSampler::Uniform { n: 50_000, seed: 15 },
        normalization: Integrator::Gauss { n_per_dim: 64 },
        boundary_n: 64,
        boundary_seed: 16,
        interior_batch: env_usize("BATCH", 512),
        boundary_batch: 16,
    };
    let opt = SolveOptConfig {
        iterations: env_usize("ITERS", 3000) as u64,
        lr0: env_f64("LR", 3e-3),
        seed: 8,
        ..SolveOptConfig::default()
    };
    let est = solve_density(&op, &domain, net, &cfg, &opt).unwrap();
    // stationary density of dX = -X dt + dW is N(0, 1/2)
    let truth = |x: f64| (-x * x).exp() / (std::f64::consts::PI).sqrt();
    let err = relative_l2_error(
        |x: &[f64], out: &mut [f64]| out[0] = truth(x[0]),
        |x: &[f64], out: &mut [f64]| out[0] = est.network.forward(x),
        1,
        &domain,
        &Integrator::Gauss { n_per_dim: 200 },
    )
    .unwrap();
    println!(
        "solve-ou: {:.1}s rel L2 = {:.5}, mass = {:.4}, neg = {:.3}, final = {:?}",
        t0.elapsed().as_secs_f64(),
        err,
        est.diagnostics.mass_estimate,
        est.diagnostics.negative_fraction,
        est.diagnostics.final_loss
    );
}

fn solve_ou2() {
    use fp_core::fields::AnalyticVectorField;
    use fp_core::linalg::Mat;
    use fp_core::regression::ConstantDiffusion;
    let t0 = Instant::now();
    let drift = AnalyticVectorField {
        dim_in: 2,
        dim_out: 2,
        f: |x: &[f64], out: &mut [f64]| {
            out[0] = -x[0];
            out[1] = -x[1];
        },
        jac: |_x: &[f64], out: &mut Mat| {
            out.fill(0.0);
            out[(0, 0)] = -1.0;
            out[(1, 1)] = -1.0;
        },
    };
    let op = FpOperator::new(
        Box::new(drift),
        Box::new(ConstantDiffusion { matrix: Mat::identity(2) }),
    )
    .unwrap();
    let domain = DomainBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let resnet = env_usize("RESNET", 1) == 1;
    let net = Network::feedforward(2, vec![env_usize("WIDTH", 24); env_usize("DEPTH", 3)], Activation::Mish, resnet)
        .unwrap()
        .init(5, InitScheme::HeUniform);
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 500.0,
        interior: InteriorSampler::Uniform { n: 50_000, seed: 15 },
        normalization: Integrator::Gauss { n_per_dim: env_usize("NNORM", 40) },
        boundary_n: 512,
        boundary_seed: 16,
        interior_batch: env_usize("BATCH", 1024),
        boundary_batch: 128,
    };
    let opt = SolveOptConfig {
        iterations: env_usize("ITERS", 4000) as u64,
        lr0: env_f64("LR", 3e-3),
        seed: 8,
        ..SolveOptConfig::default()
    };
    let est = solve_density(&op, &domain, net, &cfg, &opt).unwrap();
    let truth = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp() / std::f64::consts::PI;
    let err = relative_l2_error(
        |x: &[f64], out: &mut [f64]| out[0] = truth(x),
        |x: &[f64], out: &mut [f64]| out[0] = est.network.forward(x),
        1,
        &domain,
        &Integrator::Gauss { n_per_dim: 100 },
    )
    .unwrap();
    for (t, l) in est.diagnostics.loss_curve.iter().step_by(32) {
        println!("  t={t} total={:.4e} int={:.4e} norm={:.4e}", l.total, l.interior, l.normalization);
    }
    println!(
        "solve-ou2: {:.1}s rel L2 = {:.5}, mass = {:.4}, neg = {:.3}",
        t0.elapsed().as_secs_f64(),
        err,
        est.diagnostics.mass_estimate,
        est.diagnostics.negative_fraction,
    );
}

fn langevin_pipe() {
    use fp_core::fp::{build_langevin_fp_operator, split_rows};
    use fp_core::verify::{
        marginal_density_mc, mc_normalization_constant, testset_relative_error,
    };

    let t0 = Instant::now();
    let m = 4;
    let params = LangevinModel::new(m, 1.0, 0.5, 0.25).unwrap();
    let model = fp_core::sde::langevin::sde_model(&params);
    let mut x0 = vec![0.0; 2 * m];
    let mut rng = fp_core::rng::rng_from_seed(1);
    let mut r0 = vec![0.0; m];
    fp_core::rng::fill_standard_normal(&mut rng, &mut r0);
    for (k, v) in r0.iter().enumerate() {
        x0[m + k] = 0.1 * v;
    }
    let n_steps = env_usize("NSTEPS", 1_000_000);
    let ds = simulate_with_burn_in(&model, &x0, 5e-4, n_steps, 10_000, 2).unwrap();
    let pairs = transformed_pairs(&ds, m).unwrap();
    println!("langevin-pipe: sim {:.1}s", t0.elapsed().as_secs_f64());

    // drift fit: 2M components over (v, d)
    let arch = ArchSpec::Mlp {
        width: env_usize("DWIDTH", 48),
        hidden_layers: env_usize("DDEPTH", 2),
        activation: Activation::Relu,
    };
    let cfg = FitConfig {
        batch_size: env_usize("DBATCH", 2048),
        iterations: env_usize("DITERS", 3000) as u64,
        lr0: env_f64("DLR", 1e-3),
        seed: 11,
        subsample_stride: env_usize("DSTRIDE", 4),
        ..FitConfig::default()
    };
    let t1 = Instant::now();
    let drift = fit_drift(&pairs, &arch, &cfg).unwrap();
    println!(
        "langevin-pipe: drift fit {:.1}s losses {:?}",
        t1.elapsed().as_secs_f64(),
        drift.reports.iter().map(|r| r.final_loss).collect::<Vec<_>>()
    );
    // exact-drift reference errors on the velocity block
    let exact = LangevinTransformedDrift { params };
    let mut worst = (0.0f64, 0usize);
    for k in 0..2 * m {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (0..pairs.len()).step_by(997) {
            let x = pairs.input(i);
            let mut a = vec![0.0; 2 * m];
            let mut b = vec![0.0; 2 * m];
            exact.eval_into(x, &mut a);
            drift.eval_into(x, &mut b);
            num += (a[k] - b[k]) * (a[k] - b[k]);
            den += a[k] * a[k];
        }
        let e = (num / den.max(1e-12)).sqrt();
        if e > worst.0 {
            worst = (e, k);
        }
    }
    println!("langevin-pipe: worst component rel err {:.4} (comp {})", worst.0, worst.1);

    let est = estimate_constant_diffusion(&pairs, &drift, 5e-4).unwrap();
    let mut b_diag = vec![0.0; 2 * m];
    for k in 0..2 * m {
        b_diag[k] = est.matrix[(k, k)];
    }
    println!("langevin-pipe: b_diag {:?}", &b_diag[..m]);

    // domain and weighted interior pool over transformed rows
    let n_rows = pairs.len();
    let dim = 2 * m - 1;
    let rows = pairs.inputs_raw()[..n_rows * dim].to_vec();
    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];
    let hw = fp_core::sde::langevin::transformed_domain_halfwidths(m);
    for k in 0..dim {
        let mean: f64 = (0..n_rows).map(|i| rows[i * dim + k]).sum::<f64>() / n_rows as f64;
        lower[k] = mean - hw[k];
        upper[k] = mean + hw[k];
    }
    let domain = DomainBox::new(lower, upper).unwrap();
    let (train, test) = split_rows(&rows, dim, 0.9, 77);
    println!(
        "langevin-pipe: {} train rows, {} test rows, volume {:.3e}",
        train.len() / dim,
        test.len() / dim,
        domain.volume()
    );

    let op = build_langevin_fp_operator(Box::new(drift), b_diag, m).unwrap();
    let interior = InteriorSampler::weighted_from_rows(&train, dim, &domain, 5).unwrap();
    println!("langevin-pipe: {} in-domain train points", interior.n_points());
    let kind = std::env::var("ARCH").unwrap_or_else(|_| "mlp-relu3".into());
    let net = match kind.as_str() {
        "two-layer" => Network::two_layer_relu3(dim, env_usize("NEURONS", 768), None)
            .unwrap()
            .init(5, InitScheme::Uniform(env_f64("INITR", 1.0))),
        _ => Network::feedforward(
            dim,
            vec![env_usize("WIDTH", 48); env_usize("DEPTH", 3)],
            Activation::Relu3,
            false,
        )
        .unwrap()
        .init(5, InitScheme::HeUniform),
    };
    println!("langevin-pipe: density arch {kind}, {} params", net.n_params());
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 0.0,
        interior,
        normalization: Integrator::Mc { n: env_usize("NNORM", 131_072), seed: 99 },
        boundary_n: 0,
        boundary_seed: 0,
        interior_batch: env_usize("BATCH", 2048),
        boundary_batch: 0,
    };
    let opt = SolveOptConfig {
        iterations: env_usize("ITERS", 4000) as u64,
        lr0: env_f64("LR", 1e-3),
        seed: 8,
        ..SolveOptConfig::default()
    };
    let t2 = Instant::now();
    let est = solve_density(&op, &domain, net, &cfg, &opt).unwrap();
    println!(
        "langevin-pipe: solve {:.1}s mass {:.4} neg {:.4} final {:?}",
        t2.elapsed().as_secs_f64(),
        est.diagnostics.mass_estimate,
        est.diagnostics.negative_fraction,
        est.diagnostics.final_loss,
    );

    // reference density normalized over the box
    let gibbs = |x: &[f64]| {
        fp_core::sde::langevin::lj_gibbs_density_unnormalized(m, 1.0, 0.25, &x[..m], &x[m..])
            .unwrap_or(0.0)
    };
    let c = mc_normalization_constant(gibbs, &domain, 400_000, 123).unwrap();
    let reference = move |x: &[f64]| c * gibbs(x);
    let err = testset_relative_error(|x: &[f64]| est.network.forward(x), &reference, &test, dim)
        .unwrap();
    println!("langevin-pipe: test rel err {:.4} (bound 0.25)", err);

    // velocity marginal peak
    let grid: Vec<f64> = (0..=24)
        .map(|i| domain.lower()[0] + domain.side(0) * i as f64 / 24.0)
        .collect();
    let curve = marginal_density_mc(
        |x: &[f64]| est.network.forward(x),
        0,
        &grid,
        env_usize("MARGMC", 20_000),
        3,
        &domain,
    )
    .unwrap();
    let peak = curve.values.iter().cloned().fold(f64::MIN, f64::max);
    println!(
        "langevin-pipe: velocity marginal peak {:.4} (gaussian reference 0.7979, band 15%)",
        peak
    );
    println!("langevin-pipe: total {:.1}s", t0.elapsed().as_secs_f64());
}

fn solve_true() {
    let t0 = Instant::now();
    let op = FpOperator::new(Box::new(StudentDrift), Box::new(StudentDiffusion::new())).unwrap();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let kind = std::env::var("ARCH").unwrap_or_else(|_| "resnet".into());
    let width = env_usize("WIDTH", 24);
    let depth = env_usize("DEPTH", 3);
    let neurons = env_usize("NEURONS", 256);
    let net = match kind.as_str() {
        "two-layer" => Network::two_layer_relu3(2, neurons, None)
            .unwrap()
            .init(5, InitScheme::Uniform(env_f64("INITR", 1.0))),
        _ => Network::feedforward(2, vec![width; depth], Activation::Mish, true)
            .unwrap()
            .init(5, InitScheme::HeUniform),
    };
    println!("  arch {kind} width {width} depth {depth} neurons {neurons} params {}", net.n_params());
    let interior = if env_usize("WEIGHTED", 1) == 1 {
        let model = student_t_model();
        let ds = simulate_with_burn_in(&model, &[0.0, 0.0], 0.05, 200_000, 10_000, 7).unwrap();
        let n = ds.n_states();
        let mut rows = vec![0.0; n * 2];
        for i in 0..n {
            ds.state_into(i, &mut rows[i * 2..(i + 1) * 2]);
        }
        InteriorSampler::weighted_from_rows(&rows, 2, &domain, 15).unwrap()
    } else {
        InteriorSampler::Uniform { n: 200_000, seed: 15 }
    };
    println!("  interior pool: {} points", interior.n_points());
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 500.0,
        interior,
        normalization: Integrator::Gauss { n_per_dim: env_usize("NNORM", 60) },
        boundary_n: 4096,
        boundary_seed: 16,
        interior_batch: env_usize("BATCH", 2048),
        boundary_batch: 512,
    };
    let opt = SolveOptConfig {
        iterations: env_usize("ITERS", 5000) as u64,
        lr0: env_f64("LR", 1e-3),
        seed: 8,
        ..SolveOptConfig::default()
    };
    let est = solve_density(&op, &domain, net, &cfg, &opt).unwrap();
    let err = relative_l2_error(
        |x: &[f64], out: &mut [f64]| out[0] = student_true_density(x),
        |x: &[f64], out: &mut [f64]| out[0] = est.network.forward(x),
        1,
        &domain,
        &Integrator::Gauss { n_per_dim: 100 },
    )
    .unwrap();
    for (t, l) in est.diagnostics.loss_curve.iter().step_by(16) {
        println!("  t={t} total={:.4e} int={:.4e} norm={:.4e} bnd={:.4e}", l.total, l.interior, l.normalization, l.boundary);
    }
    println!(
        "solve-true: {:.1}s rel L2 = {:.4}, mass = {:.4}, neg frac = {:.4}, final loss = {:?}",
        t0.elapsed().as_secs_f64(),
        err,
        est.diagnostics.mass_estimate,
        est.diagnostics.negative_fraction,
        est.diagnostics.final_loss
    );
    // simulate for domain check reuse
    let _ = domain_from_data(
        &simulate_with_burn_in(&student_t_model(), &[0.0, 0.0], 0.05, 10_000, 100, 3).unwrap(),
        &DomainRule::Coverage { q: 0.98, joint: false },
    );
}
