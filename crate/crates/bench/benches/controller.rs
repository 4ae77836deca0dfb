use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector, RowDVector};
use safe_nav::hybrid::control;
use safe_nav::qp::solve;
use safe_nav::{fixtures, HalfSpaceConstraint, QpProblem, SimConfig, SupervisorState};

fn qp(c: &mut Criterion) {
    let problem = QpProblem::new(
        DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]),
        vec![
            HalfSpaceConstraint::new(RowDVector::from_row_slice(&[1.0, 0.5, -0.2]), -1.0),
            HalfSpaceConstraint::new(RowDVector::from_row_slice(&[-0.3, 1.0, 0.4]), -0.5),
        ],
    )
    .unwrap();
    c.bench_function("qp_solve_3d_pair", |b| b.iter(|| solve(black_box(&problem)).unwrap()));
}

fn controller(c: &mut Criterion) {
    let s = fixtures::office2d();
    let p = DVector::from_column_slice(&[1.2, 2.0]);
    let v = DVector::from_column_slice(&[0.1, 0.4]);
    let state = SupervisorState::default();
    c.bench_function("control_office_segment0", |b| {
        b.iter(|| control(&s.controller, &s.plan, &s.dynamics, state, black_box(&p), black_box(&v)).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let s = fixtures::walls3d();
    let cfg = SimConfig::new(1e-3, 1.0).unwrap();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("walls3d_1s_rk4", |b| b.iter(|| s.simulate_with(cfg).unwrap()));
    group.bench_function("walls3d_1s_zoh", |b| {
        b.iter(|| s.simulate_with(cfg.with_zoh(true)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, qp, controller, simulation);
criterion_main!(benches);
