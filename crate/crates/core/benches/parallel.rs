//! Compares the rayon data-parallel reductions against the sequential
//! fallback on the workloads that dominate runtime: batched PDE-residual
//! evaluation with gradients, regression gradient accumulation, and chain
//! moment statistics. Both paths produce bit-identical results; this suite
//! measures what the parallelism buys on the current machine.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fp_core::fields::VectorField;
use fp_core::fp::{FpOperator, FpOperatorOps, PdeCoeffs};
use fp_core::nn::{Activation, InitScheme, NetWorkspace, Network};
use fp_core::parallel;
use fp_core::sde::student::{StudentDiffusion, StudentDrift};
use fp_core::sde::{simulate, DomainBox};
use fp_core::{fp, sde};

fn residual_batch(c: &mut Criterion) {
    let op = FpOperator::new(Box::new(StudentDrift), Box::new(StudentDiffusion::new())).unwrap();
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let net = Network::feedforward(2, vec![24, 24, 24], Activation::Mish, true)
        .unwrap()
        .init(3, InitScheme::HeUniform);
    let n = 2048usize;
    let pts = fp::sample_uniform_box(&domain, n, 5);
    let eval = |i: usize| {
        let x = &pts[i * 2..(i + 1) * 2];
        let mut ws = NetWorkspace::new();
        let mut coeffs = PdeCoeffs::zeros(2);
        op.coeffs_into(x, &mut coeffs);
        let v = net.eval(x, 2, &mut ws);
        let r = coeffs.apply(v, &ws.out_grad[..2], &ws.out_hess[..4]);
        r * r
    };
    let mut group = c.benchmark_group("interior-residual-2048");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", n), |b| {
        b.iter(|| parallel::indexed_sum(n, eval))
    });
    group.bench_function(BenchmarkId::new("sequential", n), |b| {
        b.iter(|| parallel::indexed_sum_seq(n, eval))
    });
    group.finish();
}

fn gradient_accumulation(c: &mut Criterion) {
    let net = Network::feedforward(2, vec![32, 32], Activation::Mish, true)
        .unwrap()
        .init(7, InitScheme::HeUniform);
    let n_params = net.n_params();
    let n = 2048usize;
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let pts = fp::sample_uniform_box(&domain, n, 11);
    let item = |i: usize, buf: &mut [f64]| {
        let x = &pts[i * 2..(i + 1) * 2];
        let mut ws = NetWorkspace::new();
        let v = net.eval(x, 0, &mut ws);
        buf[n_params] += v * v;
        net.backward_value(2.0 * v, &mut ws, &mut buf[..n_params]);
    };
    let mut group = c.benchmark_group("value-gradient-2048");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| parallel::indexed_accumulate(n, n_params + 1, item))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::indexed_accumulate_seq(n, n_params + 1, item))
    });
    group.finish();
}

fn chain_statistics(c: &mut Criterion) {
    let model = sde::student::student_t_model();
    let ds = simulate(&model, &[0.0, 0.0], 0.05, 200_000, 3).unwrap();
    let col = ds.coord(0);
    let n = col.len();
    let mut group = c.benchmark_group("moment-sum-200k");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| parallel::indexed_sum(n, |i| col[i] * col[i]))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::indexed_sum_seq(n, |i| col[i] * col[i]))
    });
    group.finish();
}

fn drift_jacobians(c: &mut Criterion) {
    let drift = StudentDrift;
    let domain = DomainBox::new(vec![-4.0, -6.0], vec![4.0, 6.0]).unwrap();
    let n = 4096usize;
    let pts = fp::sample_uniform_box(&domain, n, 13);
    let mut group = c.benchmark_group("coefficient-eval-4096");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            parallel::indexed_sum(n, |i| {
                let x = &pts[i * 2..(i + 1) * 2];
                drift.divergence(x)
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            parallel::indexed_sum_seq(n, |i| {
                let x = &pts[i * 2..(i + 1) * 2];
                drift.divergence(x)
            })
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    residual_batch,
    gradient_accumulation,
    chain_statistics,
    drift_jacobians
);
criterion_main!(benches);
