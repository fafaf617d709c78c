use std::sync::Arc;

use approx::assert_relative_eq;
use rand::Rng;

use super::*;
use crate::fields::{AnalyticVectorField, DiffusionField, VectorField};
use crate::linalg::Mat;
use crate::nn::{Activation, InitScheme, NetBody, Network};
use crate::regression::metrics::Integrator;
use crate::regression::ConstantDiffusion;
use crate::rng::rng_from_seed;
use crate::sde::langevin::{
    lj_gibbs_density_unnormalized, LangevinModel, LangevinTransformedDrift,
};
use crate::sde::student::{student_true_density, StudentDrift, StudentDiffusion};
use crate::sde::DomainBox;
use crate::testutil::{fd_gradient, fd_hessian};

fn student_true_operator() -> FpOperator {
    FpOperator::new(Box::new(StudentDrift), Box::new(StudentDiffusion::new())).unwrap()
}

/// Network that evaluates to a constant everywhere (zero weights, bias-fed).
fn constant_network(value: f64) -> Network {
    let mut net = Network::feedforward(2, vec![1], Activation::Mish, false).unwrap();
    // W = 0, g = 1, c = value / mish(1)
    let mish1 = Activation::Mish.value(1.0);
    net.params_mut().copy_from_slice(&[0.0, 0.0, 1.0, value / mish1]);
    net
}

struct StubOp {
    dim: usize,
    c0: f64,
}

impl FpOperatorOps for StubOp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn coeffs_into(&self, _x: &[f64], out: &mut PdeCoeffs) {
        out.c0 = self.c0;
        out.c1.fill(0.0);
        out.c2.fill(0.0);
    }
}

#[test]
fn zero_density_has_zero_residual() {
    let op = student_true_operator();
    let zero = Network::two_layer_relu3(2, 8, None).unwrap();
    for p in [[0.0, 0.0], [1.0, -2.0], [-3.0, 4.0]] {
        assert_eq!(fp_residual(&op, &zero, &p).unwrap(), 0.0);
    }
}

#[test]
fn residual_is_linear_in_the_density() {
    // combine two two-layer networks into one exact convex-combination
    // network and compare residuals
    let op = student_true_operator();
    let q1 = Network::two_layer_relu3(2, 6, None)
        .unwrap()
        .init(1, InitScheme::Uniform(0.8));
    let q2 = Network::two_layer_relu3(2, 10, None)
        .unwrap()
        .init(2, InitScheme::Uniform(0.8));
    let (alpha, beta) = (0.7, -1.3);
    let combined = {
        let (m1, m2) = (6usize, 10usize);
        let m = m1 + m2;
        let mut net = Network::two_layer_relu3(2, m, None).unwrap();
        if let (NetBody::TwoLayer(a), NetBody::TwoLayer(b), NetBody::TwoLayer(c)) =
            (&q1.body, &q2.body, &mut net.body)
        {
            let params = c.params_mut();
            for i in 0..m1 {
                params[i] = alpha * a.params()[i] * m as f64 / m1 as f64;
            }
            for i in 0..m2 {
                params[m1 + i] = beta * b.params()[i] * m as f64 / m2 as f64;
            }
            for i in 0..m1 {
                params[m + 2 * i] = a.params()[m1 + 2 * i];
                params[m + 2 * i + 1] = a.params()[m1 + 2 * i + 1];
            }
            for i in 0..m2 {
                params[m + 2 * (m1 + i)] = b.params()[m2 + 2 * i];
                params[m + 2 * (m1 + i) + 1] = b.params()[m2 + 2 * i + 1];
            }
        }
        net
    };
    let mut rng = rng_from_seed(5);
    for _ in 0..20 {
        let x = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
        let r1 = fp_residual(&op, &q1, &x).unwrap();
        let r2 = fp_residual(&op, &q2, &x).unwrap();
        let rc = fp_residual(&op, &combined, &x).unwrap();
        let expect = alpha * r1 + beta * r2;
        assert_relative_eq!(rc, expect, max_relative = 1e-10, epsilon = 1e-12);
    }
}

#[test]
fn constant_diffusion_collapses_to_trace_form() {
    // with a constant B the general expansion must equal
    // -(div a) p - a . grad p + (1/2) tr(B hess p)
    let b = Mat::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]);
    let drift = AnalyticVectorField {
        dim_in: 2,
        dim_out: 2,
        f: |x: &[f64], out: &mut [f64]| {
            out[0] = -x[0] + 0.3 * x[1] * x[1];
            out[1] = 0.1 * x[0] - 2.0 * x[1];
        },
        jac: |x: &[f64], out: &mut Mat| {
            out[(0, 0)] = -1.0;
            out[(0, 1)] = 0.6 * x[1];
            out[(1, 0)] = 0.1;
            out[(1, 1)] = -2.0;
        },
    };
    let op = FpOperator::new(
        Box::new(drift),
        Box::new(ConstantDiffusion { matrix: b.clone() }),
    )
    .unwrap();
    let net = Network::feedforward(2, vec![8, 8], Activation::Mish, false)
        .unwrap()
        .init(3, InitScheme::HeUniform);
    let mut rng = rng_from_seed(8);
    for _ in 0..20 {
        let x = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let general = fp_residual(&op, &net, &x).unwrap();
        // trace form assembled by hand
        let mut ws = crate::nn::NetWorkspace::new();
        let v = net.eval(&x, 2, &mut ws);
        let mut a = [0.0; 2];
        op.drift().eval_into(&x, &mut a);
        let div = op.drift().divergence(&x);
        let mut trace = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                trace += b[(i, j)] * ws.out_hess[i * 2 + j];
            }
        }
        let hand = -div * v - (a[0] * ws.out_grad[0] + a[1] * ws.out_grad[1]) + 0.5 * trace;
        assert_relative_eq!(general, hand, max_relative = 1e-12, epsilon = 1e-13);
    }
}

#[test]
fn divergence_form_on_constant_density() {
    // a(x) = x in 1-D, B = 0, p = 1: residual = -div(a p) = -1
    let drift = AnalyticVectorField {
        dim_in: 1,
        dim_out: 1,
        f: |x: &[f64], out: &mut [f64]| out[0] = x[0],
        jac: |_x: &[f64], out: &mut Mat| out[(0, 0)] = 1.0,
    };
    let op = FpOperator::new(
        Box::new(drift),
        Box::new(ConstantDiffusion {
            matrix: Mat::zeros(1, 1),
        }),
    )
    .unwrap();
    // constant 1 in one dimension
    let mut net = Network::feedforward(1, vec![1], Activation::Mish, false).unwrap();
    let mish1 = Activation::Mish.value(1.0);
    net.params_mut().copy_from_slice(&[0.0, 1.0, 1.0 / mish1]);
    for x in [[-0.7], [0.0], [2.5]] {
        assert_relative_eq!(fp_residual(&op, &net, &x).unwrap(), -1.0, epsilon = 1e-12);
    }
}

#[test]
fn student_operator_annihilates_closed_form_density() {
    // true operator on the closed-form density, derivatives by fourth-order
    // finite differences: |residual| < 1e-5 at 100 random points in [-2,2]^2
    let op = student_true_operator();
    let f = |x: &[f64]| student_true_density(x);
    let mut rng = rng_from_seed(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
        let v = f(&x);
        let g = fd_gradient(&f, &x, 1e-4);
        let h = fd_hessian(&f, &x, 1e-4);
        let c = op.coeffs(&x);
        let r = c.apply(v, &g, &h);
        worst = worst.max(r.abs());
    }
    assert!(worst < 1e-5, "worst |residual| = {worst:.3e}");
}

#[test]
fn langevin_operator_annihilates_gibbs_density() {
    // transformed operator with exact coefficients at M = 3 applied to the
    // Gibbs density; relative residual < 1e-4 with h = 1e-3 differences
    let params = LangevinModel::new(3, 1.0, 0.5, 0.25).unwrap();
    let op = LangevinFpOperator::new(
        Box::new(LangevinTransformedDrift { params }),
        params.true_diffusion_diag(),
        3,
    )
    .unwrap();
    let m = 3;
    let f = |z: &[f64]| {
        lj_gibbs_density_unnormalized(m, params.a0, params.k_b_t, &z[..m], &z[m..]).unwrap()
    };
    let mut rng = rng_from_seed(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        // interior points of the transformed domain; the displacement range
        // stays within one standard deviation of the Gibbs factor, where the
        // h = 1e-3 stencil resolves the steep pair-potential exponent
        let mut z = vec![0.0; 2 * m - 1];
        for v in z[..m].iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 1.6;
        }
        for d in z[m..].iter_mut() {
            *d = (rng.gen::<f64>() - 0.5) * 0.08;
        }
        let v = f(&z);
        let g = fd_gradient(&f, &z, 1e-3);
        let h = fd_hessian(&f, &z, 1e-3);
        let c = op.coeffs(&z);
        let r = c.apply(v, &g, &h);
        worst = worst.max((r / v).abs());
    }
    assert!(worst < 1e-4, "worst |residual|/density = {worst:.3e}");
}

#[test]
fn langevin_operator_reduces_to_velocity_laplacian_for_zero_drift() {
    let m = 4;
    let zero_drift = AnalyticVectorField {
        dim_in: 2 * m - 1,
        dim_out: 2 * m,
        f: |_x: &[f64], out: &mut [f64]| out.fill(0.0),
        jac: |_x: &[f64], out: &mut Mat| out.fill(0.0),
    };
    let mut b_diag = vec![0.0; 2 * m];
    b_diag[0] = 0.7; // only b_11 nonzero
    let op = build_langevin_fp_operator(Box::new(zero_drift), b_diag, m).unwrap();
    // density a function of v_1 only
    let mut net = Network::two_layer_relu3(2 * m - 1, 3, None)
        .unwrap()
        .init(4, InitScheme::Uniform(1.0));
    if let NetBody::TwoLayer(n) = &mut net.body {
        let d = n.input_dim();
        let neurons = n.neurons();
        let params = n.params_mut();
        for mm in 0..neurons {
            for a in 1..d {
                params[neurons + mm * d + a] = 0.0;
            }
        }
    }
    let mut rng = rng_from_seed(6);
    for _ in 0..10 {
        let x: Vec<f64> = (0..2 * m - 1).map(|_| rng.gen::<f64>() - 0.5).collect();
        let r = fp_residual(&op, &net, &x).unwrap();
        let h = net.input_hessian(&x);
        assert_relative_eq!(r, 0.5 * 0.7 * h[(0, 0)], max_relative = 1e-12, epsilon = 1e-14);
    }
}

#[test]
fn interior_term_trivials() {
    let domain = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
    let op = StubOp { dim: 2, c0: 2.5 };
    // zero density
    let zero = Network::two_layer_relu3(2, 4, None).unwrap();
    let sampler = InteriorSampler::Uniform { n: 500, seed: 1 };
    assert_eq!(interior_term(&op, &zero, &sampler, &domain).unwrap(), 0.0);
    // constant residual r over the box: uniform mode returns |Omega| r^2
    let one = constant_network(1.0);
    let got = interior_term(&op, &one, &sampler, &domain).unwrap();
    assert_relative_eq!(got, 6.0 * 2.5 * 2.5, max_relative = 1e-10);
}

#[test]
fn weighted_interior_requires_in_domain_points() {
    let domain = DomainBox::new(vec![0.0], vec![1.0]).unwrap();
    let rows = vec![5.0, 7.0, -3.0];
    assert!(InteriorSampler::weighted_from_rows(&rows, 1, &domain, 0).is_err());
    let rows = vec![0.5, 7.0, 0.25];
    let s = InteriorSampler::weighted_from_rows(&rows, 1, &domain, 0).unwrap();
    assert_eq!(s.n_points(), 2);
}

#[test]
fn interior_term_mc_self_consistency() {
    // a fixed smooth density under the true 1-D OU operator: a small MC
    // estimate agrees with a 10^6-node reference within its own 3-sigma band
    let drift = AnalyticVectorField {
        dim_in: 1,
        dim_out: 1,
        f: |x: &[f64], out: &mut [f64]| out[0] = -x[0],
        jac: |_x: &[f64], out: &mut Mat| out[(0, 0)] = -1.0,
    };
    let op = FpOperator::new(
        Box::new(drift),
        Box::new(ConstantDiffusion {
            matrix: Mat::identity(1),
        }),
    )
    .unwrap();
    let net = Network::feedforward(1, vec![6], Activation::Tanh, false)
        .unwrap()
        .init(12, InitScheme::HeUniform);
    let domain = DomainBox::new(vec![-2.0], vec![2.0]).unwrap();
    let reference = interior_term(
        &op,
        &net,
        &InteriorSampler::Uniform { n: 1_000_000, seed: 100 },
        &domain,
    )
    .unwrap();
    // the small estimate with its empirical 3-sigma band
    let n = 2000;
    let pts = sample_uniform_box(&domain, n, 42);
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let r = fp_residual(&op, &net, &pts[i..i + 1]).unwrap();
            domain.volume() * r * r
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sigma = (var / n as f64).sqrt();
    assert!(
        (mean - reference).abs() < 3.0 * sigma,
        "mean {mean}, reference {reference}, 3 sigma {}",
        3.0 * sigma
    );
}

#[test]
fn normalization_and_boundary_trivials() {
    let domain = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
    // q = 1/|Omega| has zero normalization penalty under the Gauss rule
    let q = constant_network(1.0 / 6.0);
    let nt = normalization_term(&q, &domain, &Integrator::Gauss { n_per_dim: 6 }).unwrap();
    assert!(nt < 1e-20, "{nt}");
    // zero density: normalization 1, boundary 0
    let zero = Network::two_layer_relu3(2, 4, None).unwrap();
    assert_relative_eq!(
        normalization_term(&zero, &domain, &Integrator::Gauss { n_per_dim: 4 }).unwrap(),
        1.0
    );
    assert_eq!(boundary_term(&zero, &domain, 200, 3).unwrap(), 0.0);
    // constant c on the boundary: |dOmega| c^2
    let c = constant_network(0.3);
    let bt = boundary_term(&c, &domain, 500, 4).unwrap();
    assert_relative_eq!(bt, domain.boundary_measure() * 0.09, max_relative = 1e-10);
}

#[test]
fn empirical_loss_structure() {
    let domain = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
    let op = StubOp { dim: 2, c0: 1.0 };
    let zero = Network::two_layer_relu3(2, 4, None).unwrap();
    let mk_cfg = |lambda1: f64, lambda2: f64| LossConfig {
        lambda1,
        lambda2,
        interior: InteriorSampler::Uniform { n: 256, seed: 9 },
        normalization: Integrator::Gauss { n_per_dim: 5 },
        boundary_n: 128,
        boundary_seed: 11,
        interior_batch: 64,
        boundary_batch: 32,
    };
    // zero density: total = lambda1 (normalization term is 1)
    let l = empirical_loss(&op, &zero, &mk_cfg(3.5, 0.5), &domain).unwrap();
    assert_relative_eq!(l.total, 3.5);
    // lambda2 = 0 drops the boundary term exactly
    let l0 = empirical_loss(&op, &zero, &mk_cfg(1.0, 0.0), &domain).unwrap();
    assert_eq!(l0.boundary, 0.0);
    // doubling lambda1 doubles only the normalization contribution
    let q = constant_network(0.4);
    let a = empirical_loss(&op, &q, &mk_cfg(1.0, 2.0), &domain).unwrap();
    let b = empirical_loss(&op, &q, &mk_cfg(2.0, 2.0), &domain).unwrap();
    assert_relative_eq!(
        b.total - a.total,
        a.normalization,
        max_relative = 1e-10,
        epsilon = 1e-14
    );
    // lambda1 = 0 is rejected with the degeneracy explanation
    let err = empirical_loss(&op, &q, &mk_cfg(0.0, 0.0), &domain).unwrap_err();
    assert!(err.to_string().contains("zero function"), "{err}");
}

#[test]
fn solve_density_is_seed_deterministic() {
    let op = student_true_operator();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 500.0,
        interior: InteriorSampler::Uniform { n: 512, seed: 5 },
        normalization: Integrator::Gauss { n_per_dim: 16 },
        boundary_n: 128,
        boundary_seed: 6,
        interior_batch: 64,
        boundary_batch: 32,
    };
    let opt = SolveOptConfig {
        iterations: 120,
        lr0: 1e-3,
        seed: 33,
        ..SolveOptConfig::default()
    };
    let run = || {
        let net = Network::feedforward(2, vec![12, 12], Activation::Mish, true)
            .unwrap()
            .init(77, InitScheme::HeUniform);
        solve_density(&op, &domain, net, &cfg, &opt).unwrap()
    };
    let a = run();
    let b = run();
    for (x, y) in a.network.params().iter().zip(b.network.params().iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(a.diagnostics.mass_estimate, b.diagnostics.mass_estimate);
}

#[test]
fn solve_density_rejects_relu_density_with_guidance() {
    let op = student_true_operator();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 0.0,
        interior: InteriorSampler::Uniform { n: 64, seed: 5 },
        normalization: Integrator::Gauss { n_per_dim: 8 },
        boundary_n: 0,
        boundary_seed: 0,
        interior_batch: 16,
        boundary_batch: 0,
    };
    let net = Network::feedforward(2, vec![8], Activation::Relu, false).unwrap();
    let err = solve_density(&op, &domain, net, &cfg, &SolveOptConfig::default()).unwrap_err();
    assert!(err.to_string().contains("relu3"), "{err}");
}

#[test]
fn solve_density_loss_decreases() {
    let op = student_true_operator();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let cfg = LossConfig {
        lambda1: 1.0,
        lambda2: 500.0,
        interior: InteriorSampler::Uniform { n: 1024, seed: 15 },
        normalization: Integrator::Gauss { n_per_dim: 24 },
        boundary_n: 256,
        boundary_seed: 16,
        interior_batch: 256,
        boundary_batch: 64,
    };
    let opt = SolveOptConfig {
        iterations: 800,
        lr0: 2e-3,
        seed: 8,
        ..SolveOptConfig::default()
    };
    let net = Network::feedforward(2, vec![16, 16], Activation::Mish, true)
        .unwrap()
        .init(5, InitScheme::HeUniform);
    let est = solve_density(&op, &domain, net, &cfg, &opt).unwrap();
    let curve = &est.diagnostics.loss_curve;
    let early: f64 = curve
        .iter()
        .filter(|(t, _)| *t >= 30 && *t < 130)
        .map(|(_, l)| l.total)
        .sum::<f64>()
        / curve.iter().filter(|(t, _)| *t >= 30 && *t < 130).count() as f64;
    let late_count = curve.iter().filter(|(t, _)| *t >= 700).count();
    let late: f64 = curve
        .iter()
        .filter(|(t, _)| *t >= 700)
        .map(|(_, l)| l.total)
        .sum::<f64>()
        / late_count as f64;
    assert!(late < early, "late {late} vs early {early}");
}
