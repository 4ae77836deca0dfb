mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use safe_nav::cbf::h_prime;
use safe_nav::dynamics::rk4_step;
use safe_nav::hybrid::should_switch;
use safe_nav::{
    parse_scenario, BarrierGains, ClfParams, ControllerParams, DampedCoupled2D, DoubleIntegrator, Dynamics, Ellipsoid,
    PathPlan, Scenario, SimConfig, SupervisorState,
};

/// Ellipsoid around segment `a -> b`, semi-axis `along * |b - a| / 2` on the
/// segment and `radius` across it.
fn segment_ellipsoid(a: &DVector<f64>, b: &DVector<f64>, along: f64, radius: f64) -> Ellipsoid {
    let n = a.len();
    let d = b - a;
    let half = along * d.norm() / 2.0;
    let u = d.normalize();
    let uu = &u * u.transpose();
    let shape = &uu / (half * half) + (DMatrix::identity(n, n) - &uu) / (radius * radius);
    Ellipsoid::new((a + b) / 2.0, (&shape + shape.transpose()) * 0.5).unwrap()
}

/// Random plan of 1-4 segments whose consecutive waypoints are at least 0.5 apart.
fn plan(n: usize) -> impl Strategy<Value = PathPlan> {
    (
        prop::collection::vec(prop::collection::vec(0.5..2.0f64, n), 1..=4),
        prop::collection::vec((1.2..2.0f64, 0.3..2.0f64), 4),
    )
        .prop_map(move |(steps, shapes)| {
            let mut wp = vec![DVector::zeros(n)];
            for (k, s) in steps.iter().enumerate() {
                // Alternate sign on one axis so the path turns.
                let mut step = DVector::from_column_slice(s);
                if k % 2 == 1 {
                    step[0] = -step[0];
                }
                wp.push(wp.last().unwrap() + step);
            }
            let es = (0..steps.len())
                .map(|i| segment_ellipsoid(&wp[i], &wp[i + 1], shapes[i].0, shapes[i].1))
                .collect();
            PathPlan::new(wp, es).unwrap()
        })
}

fn controller(n: usize) -> impl Strategy<Value = ControllerParams> {
    (0.1..10.0f64, 0.1..10.0f64, 0.01..1.0f64).prop_map(move |(k1, k2, gamma)| {
        ControllerParams::new(
            ClfParams::default_for(n).with_gamma(gamma),
            BarrierGains::new(k1, k2).unwrap(),
            DMatrix::identity(n, n),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Every waypoint x_{i+1} at rest is strictly inside both neighbouring safe
    // sets, so the supervisor always has a place to switch.
    #[test]
    fn waypoints_at_rest_witness_switches(p in (1usize..=3).prop_flat_map(|n| (plan(n), controller(n)))) {
        let (plan, params) = p;
        let zero = DVector::zeros(plan.dim());
        for i in 0..plan.segments().saturating_sub(1) {
            let x = plan.waypoint(i + 1);
            for e in [plan.ellipsoid(i), plan.ellipsoid(i + 1)] {
                let h = e.h_value(x).unwrap();
                prop_assert!(h > 0.0);
                prop_assert_eq!(h_prime(e, params.barrier(), x, &zero).unwrap(), params.barrier().alpha(h));
            }
            let s = SupervisorState { segment: i, finished: false };
            prop_assert!(should_switch(&params, &plan, s, x, &zero));
        }
    }

    #[test]
    fn free_damped_motion_loses_energy(mass in 0.2..5.0f64, damping in 0.05..3.0f64, v0 in vector(2, 5.0), p0 in vector(2, 5.0)) {
        let model = DampedCoupled2D::new(mass, damping).unwrap();
        let mut zero = |_: &DVector<f64>, _: &DVector<f64>| Ok(DVector::zeros(2));
        let (mut p, mut v) = (p0, v0);
        let mut energy = 0.5 * mass * v.norm_squared();
        let dt = 1e-3;
        for k in 0..10_000 {
            let (pn, vn) = rk4_step(&model, &mut zero, k as f64 * dt, &p, &v, dt).unwrap();
            let e = 0.5 * mass * vn.norm_squared();
            prop_assert!(e <= energy + 1e-9, "step {k}: {e} > {energy}");
            energy = e;
            p = pn;
            v = vn;
        }
    }

    #[test]
    fn simulation_is_deterministic(p in (2usize..=3).prop_flat_map(|n| (plan(n), controller(n))), zoh in any::<bool>()) {
        let (plan, params) = p;
        let model = DoubleIntegrator::new(plan.dim()).unwrap();
        let cfg = SimConfig::new(0.01, 2.0).unwrap().with_zoh(zoh);
        let a = safe_nav::dynamics::simulate(&plan, &model, &params, cfg).unwrap();
        let b = safe_nav::dynamics::simulate(&plan, &model, &params, cfg).unwrap();
        prop_assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
        prop_assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn scenario_json_round_trips(
        p in (2usize..=3).prop_flat_map(|n| (plan(n), controller(n))),
        damped in (0.2..5.0f64, 0.05..3.0f64),
        sim in (1e-4..0.1f64, 0.0..100.0f64, any::<bool>()),
    ) {
        let (plan, controller) = p;
        let n = plan.dim();
        let dynamics = if n == 2 {
            Dynamics::DampedCoupled2D(DampedCoupled2D::new(damped.0, damped.1).unwrap())
        } else {
            Dynamics::DoubleIntegrator(DoubleIntegrator::new(n).unwrap())
        };
        let s = Scenario {
            name: "random".into(),
            dynamics,
            plan,
            obstacles: vec![],
            controller,
            sim: SimConfig::new(sim.0, sim.1).unwrap().with_zoh(sim.2),
        };
        let back = parse_scenario(&s.to_json()).unwrap();
        prop_assert_eq!(back, s);
    }
}
