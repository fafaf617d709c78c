use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::sde::langevin::{langevin_model, transform_displacements};
use crate::sde::student::student_t_model;

fn zero_model(d: usize) -> SdeModel {
    SdeModel::new(
        d,
        d,
        Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)),
        Arc::new(|_x: &[f64], out: &mut Mat| out.fill(0.0)),
    )
}

fn ou_1d() -> SdeModel {
    SdeModel::new(
        1,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        Arc::new(|_x: &[f64], out: &mut Mat| out[(0, 0)] = 1.0),
    )
}

#[test]
fn em_step_zero_dynamics_keeps_state() {
    let model = zero_model(3);
    let x = vec![0.3, -0.7, 2.0];
    let out = em_step(&model, &x, 0.1, &[1.0, -2.0, 0.5]).unwrap();
    assert_eq!(out, x);
}

#[test]
fn em_step_student_fixed_point_of_drift() {
    let model = student_t_model();
    let out = em_step(&model, &[0.0, 0.0], 0.05, &[0.0, 0.0]).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
}

#[test]
fn em_step_deterministic_euler() {
    let model = SdeModel::new(
        1,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        Arc::new(|_x: &[f64], out: &mut Mat| out[(0, 0)] = 0.0),
    );
    let out = em_step(&model, &[1.0], 0.1, &[12.3]).unwrap();
    assert_relative_eq!(out[0], 0.9, epsilon = 1e-15);
}

#[test]
fn em_step_rejects_dimension_mismatch() {
    let model = zero_model(2);
    assert!(matches!(
        em_step(&model, &[0.0], 0.1, &[0.0, 0.0]),
        Err(CoreError::Contract(_))
    ));
    assert!(matches!(
        em_step(&model, &[0.0, 0.0], 0.1, &[0.0]),
        Err(CoreError::Contract(_))
    ));
}

#[test]
fn em_step_reports_non_finite_coefficients() {
    let model = SdeModel::new(
        1,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = 1.0 / (x[0] - 1.0)),
        Arc::new(|_x: &[f64], out: &mut Mat| out[(0, 0)] = 0.0),
    );
    let err = em_step(&model, &[1.0], 0.1, &[0.0]).unwrap_err();
    match err {
        CoreError::Numerical(msg) => assert!(msg.contains("1.0"), "message should name state: {msg}"),
        other => panic!("expected numerical error, got {other}"),
    }
}

#[test]
fn simulate_is_bit_deterministic() {
    let model = student_t_model();
    let a = simulate(&model, &[0.1, -0.2], 0.05, 500, 42).unwrap();
    let b = simulate(&model, &[0.1, -0.2], 0.05, 500, 42).unwrap();
    for k in 0..2 {
        for n in 0..a.n_states() {
            assert_eq!(a.coord(k)[n].to_bits(), b.coord(k)[n].to_bits());
        }
    }
    let c = simulate(&model, &[0.1, -0.2], 0.05, 500, 43).unwrap();
    assert_ne!(a.coord(0), c.coord(0));
}

#[test]
fn simulate_zero_noise_equals_forward_euler() {
    let model = SdeModel::new(
        1,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -2.0 * x[0]),
        Arc::new(|_x: &[f64], out: &mut Mat| out[(0, 0)] = 0.0),
    );
    let ds = simulate(&model, &[1.0], 0.01, 100, 7).unwrap();
    let mut x = 1.0;
    for n in 0..=100 {
        assert_relative_eq!(ds.coord(0)[n], x, epsilon = 1e-14);
        x += -2.0 * x * 0.01;
    }
}

#[test]
fn simulate_zero_dynamics_stays_at_x0() {
    let model = zero_model(2);
    let ds = simulate(&model, &[3.0, -1.0], 0.1, 50, 1).unwrap();
    assert!(ds.coord(0).iter().all(|&v| v == 3.0));
    assert!(ds.coord(1).iter().all(|&v| v == -1.0));
}

#[test]
fn ou_tail_variance_near_half() {
    // stationary variance of dX = -X dt + dW is 1/2; EM at dt = 0.01 biases
    // it to 1/(2 - dt) ~ 0.5025
    let model = ou_1d();
    let ds = simulate(&model, &[0.0], 0.01, 1_000_000, 2024).unwrap();
    let tail = &ds.coord(0)[200_000..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (tail.len() - 1) as f64;
    assert!((0.45..=0.56).contains(&var), "variance {var}");
}

#[test]
fn simulate_aborts_on_escape_with_step_index() {
    // explosive dynamics: x' = x^3 with large dt blows up quickly
    let model = SdeModel::new(
        1,
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0].powi(3)),
        Arc::new(|_x: &[f64], out: &mut Mat| out[(0, 0)] = 0.0),
    );
    let err = simulate(&model, &[10.0], 10.0, 1000, 5).unwrap_err();
    match err {
        CoreError::Numerical(msg) => assert!(msg.contains("step"), "{msg}"),
        other => panic!("expected numerical error, got {other}"),
    }
}

#[test]
fn langevin_em_step_keeps_displacement_rows_noise_free() {
    let m = 4;
    let model = langevin_model(m, 1.0, 0.5, 0.25).unwrap();
    let x: Vec<f64> = (0..2 * m).map(|i| 0.02 * (i as f64 - 3.0)).collect();
    let dt = 5e-4;
    let xi = vec![1.7, -0.3, 0.9, 2.1];
    let stepped = em_step(&model, &x, dt, &xi).unwrap();
    let zero_noise = em_step(&model, &x, dt, &[0.0; 4]).unwrap();
    // displacement rows: identical whatever the noise; update is r + v dt
    for k in m..2 * m {
        assert_eq!(stepped[k], zero_noise[k]);
        assert_relative_eq!(stepped[k], x[k] + x[k - m] * dt, epsilon = 1e-15);
    }
    // velocity rows carry exactly sqrt(2 kBT gamma dt) * xi of noise
    let amp = (2.0 * 0.25 * 0.5_f64).sqrt() * dt.sqrt();
    for k in 0..m {
        assert_relative_eq!(stepped[k] - zero_noise[k], amp * xi[k], epsilon = 1e-15);
    }
}

#[test]
fn make_pairs_trivials() {
    let rows = vec![vec![0.0], vec![1.0]];
    let ds = TimeSeriesDataset::from_rows(&rows, 0.5, 0);
    let pairs = make_pairs(&ds).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs.input(0), &[0.0]);
    assert_eq!(pairs.target(0), &[2.0]);

    let constant = TimeSeriesDataset::from_rows(&vec![vec![1.5, -2.0]; 7], 0.1, 0);
    let pairs = make_pairs(&constant).unwrap();
    assert_eq!(pairs.len(), 6);
    for n in 0..pairs.len() {
        assert_eq!(pairs.target(n), &[0.0, 0.0]);
    }

    let single = TimeSeriesDataset::from_rows(&[vec![0.0]], 0.1, 0);
    assert!(make_pairs(&single).is_err());
}

#[test]
fn subsample_dataset() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let ds = TimeSeriesDataset::from_rows(&rows, 0.1, 0);
    assert_eq!(ds.subsample(1), ds);
    let s3 = ds.subsample(3);
    assert_eq!(s3.coord(0), &[0.0, 3.0, 6.0, 9.0]);
    let wide = ds.subsample(100);
    assert_eq!(wide.coord(0), &[0.0]);
}

#[test]
fn subsample_pairs() {
    let rows: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64]).collect();
    let ds = TimeSeriesDataset::from_rows(&rows, 1.0, 0);
    let pairs = make_pairs(&ds).unwrap();
    let s = pairs.subsample(4);
    assert_eq!(s.len(), 3);
    assert_eq!(s.input(1), &[4.0]);
    // targets still use consecutive raw states
    assert_eq!(s.target(1), &[1.0]);
}

#[test]
fn domain_trivials() {
    let single = TimeSeriesDataset::from_rows(&[vec![2.0, -1.0]], 0.1, 0);
    let b = domain_from_data(
        &single,
        &DomainRule::MeanHalfwidth {
            halfwidths: vec![1.0, 1.0],
        },
    )
    .unwrap();
    assert_eq!(b.lower(), &[1.0, -2.0]);
    assert_eq!(b.upper(), &[3.0, 0.0]);

    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
    let ds = TimeSeriesDataset::from_rows(&rows, 0.1, 0);
    let full = domain_from_data(&ds, &DomainRule::Coverage { q: 1.0, joint: false }).unwrap();
    assert_eq!(full.lower(), &[0.0]);
    assert_eq!(full.upper(), &[99.0]);

    assert!(domain_from_data(&ds, &DomainRule::Coverage { q: 0.0, joint: false }).is_err());
    assert!(domain_from_data(&ds, &DomainRule::Coverage { q: 1.5, joint: true }).is_err());
}

#[test]
fn coverage_modes() {
    let model = student_t_model();
    let ds = simulate(&model, &[0.0, 0.0], 0.05, 20_000, 9).unwrap();
    let joint_fraction = |b: &DomainBox| {
        let mut inside = 0usize;
        let mut x = vec![0.0; 2];
        for n in 0..ds.n_states() {
            ds.state_into(n, &mut x);
            if b.contains(&x) {
                inside += 1;
            }
        }
        inside as f64 / ds.n_states() as f64
    };

    // per-axis: each coordinate's central 98% range is covered
    let per_axis = domain_from_data(&ds, &DomainRule::Coverage { q: 0.98, joint: false }).unwrap();
    for k in 0..2 {
        let col = ds.coord(k);
        let inside = col
            .iter()
            .filter(|&&v| v >= per_axis.lower()[k] && v <= per_axis.upper()[k])
            .count();
        let frac = inside as f64 / col.len() as f64;
        assert!(frac >= 0.98, "axis {k} coverage {frac}");
    }

    // joint: at least 98% of the points fall in the box, and the joint box
    // is no smaller than needed (it contains the per-axis box)
    let joint = domain_from_data(&ds, &DomainRule::Coverage { q: 0.98, joint: true }).unwrap();
    let frac = joint_fraction(&joint);
    assert!(frac >= 0.98, "joint coverage {frac}");
    assert!(joint_fraction(&per_axis) < 0.98, "per-axis already joint-covers; test vacuous");
    for k in 0..2 {
        assert!(joint.lower()[k] <= per_axis.lower()[k]);
        assert!(joint.upper()[k] >= per_axis.upper()[k]);
    }
}

#[test]
fn langevin_paper_halfwidths() {
    // the transformed-domain convention: 1.0 for velocities, 0.1 for
    // displacements
    let hw = crate::sde::langevin::transformed_domain_halfwidths(4);
    assert_eq!(hw, vec![1.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1]);
}

proptest! {
    #[test]
    fn displacement_sum_telescopes(r in proptest::collection::vec(-10.0f64..10.0, 2..20)) {
        let d = transform_displacements(&r);
        let total: f64 = d.iter().sum();
        prop_assert!((total - (r[r.len() - 1] - r[0])).abs() < 1e-9);
    }

    #[test]
    fn pairs_count_is_states_minus_one(n in 2usize..50) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.5]).collect();
        let ds = TimeSeriesDataset::from_rows(&rows, 0.25, 0);
        let pairs = make_pairs(&ds).unwrap();
        prop_assert_eq!(pairs.len(), n - 1);
    }
}
