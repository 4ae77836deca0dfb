mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use safe_nav::cbf::{barrier_condition, cbf_constraint, h_prime};
use safe_nav::clf::{clf_constraint, clf_derivative, clf_value, w3_value};
use safe_nav::{BarrierGains, ClfParams, DampedCoupled2D, DoubleIntegrator, DynamicsModel, Ellipsoid};

fn models() -> impl Strategy<Value = Box<dyn DynamicsModelDyn>> {
    prop_oneof![
        (1usize..=3).prop_map(|n| Box::new(DoubleIntegrator::new(n).unwrap()) as Box<dyn DynamicsModelDyn>),
        (0.2..5.0f64, 0.0..3.0f64)
            .prop_map(|(m, b)| Box::new(DampedCoupled2D::new(m, b).unwrap()) as Box<dyn DynamicsModelDyn>),
    ]
}

// Object-safe alias so both models can be drawn from one strategy.
trait DynamicsModelDyn: DynamicsModel + std::fmt::Debug {}
impl<T: DynamicsModel + std::fmt::Debug> DynamicsModelDyn for T {}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn h_never_exceeds_one(e in (1usize..=3).prop_flat_map(ellipsoid), seed in vector(3, 20.0)) {
        let p = seed.rows(0, e.dim()).into_owned();
        let h = e.h_value(&p).unwrap();
        prop_assert!(h <= 1.0);
        prop_assert_eq!(e.h_value(e.center()).unwrap(), 1.0);
    }

    #[test]
    fn gradient_matches_central_differences(e in (1usize..=3).prop_flat_map(ellipsoid), x in vector(3, 6.0)) {
        let p = x.rows(0, e.dim()).into_owned();
        let g = e.h_gradient(&p).unwrap();
        let eps = 1e-5;
        for i in 0..e.dim() {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (e.h_value(&hi).unwrap() - e.h_value(&lo).unwrap()) / (2.0 * eps);
            prop_assert!(rel_close(g[i], fd, 1.0, 1e-6), "component {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn barrier_is_rotation_invariant(
        e in (2usize..=3).prop_flat_map(ellipsoid),
        x in vector(3, 6.0),
        r in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let n = e.dim();
        let q = orthogonal(n, &r);
        let p = x.rows(0, n).into_owned();
        let rotated = Ellipsoid::new(&q * e.center(), &q * e.shape() * q.transpose()).unwrap();
        let h0 = e.h_value(&p).unwrap();
        let h1 = rotated.h_value(&(&q * &p)).unwrap();
        prop_assert!(rel_close(h0, h1, 1.0, 1e-10), "{h0} vs {h1}");
        let g0 = &q * e.h_gradient(&p).unwrap();
        let g1 = rotated.h_gradient(&(&q * &p)).unwrap();
        prop_assert!((g0 - g1).amax() <= 1e-9 * (1.0 + e.h_gradient(&p).unwrap().amax()));
    }

    #[test]
    fn alpha_derivative_matches_differences(k1 in 0.05..10.0f64, s in -2.0..2.0f64) {
        let g = BarrierGains::new(k1, 1.0).unwrap();
        let eps = 1e-5;
        let fd = (g.alpha(s + eps) - g.alpha(s - eps)) / (2.0 * eps);
        prop_assert!(rel_close(g.alpha_derivative(s), fd, 1.0, 1e-6));
    }

    // The half-space row is the barrier condition rearranged: residual = -condition.
    #[test]
    fn cbf_row_agrees_with_barrier_condition(
        model in models(),
        k in (0.1..5.0f64, 0.1..5.0f64),
        seed in (vector(3, 3.0), vector(3, 3.0), vector(3, 10.0)),
        r in prop::collection::vec(0.5..3.0f64, 3),
        c in vector(3, 2.0),
    ) {
        let n = model.dim();
        let e = Ellipsoid::axis_aligned(c.rows(0, n).into_owned(), &r[..n]).unwrap();
        let gains = BarrierGains::new(k.0, k.1).unwrap();
        let (p, v, u) = (seed.0.rows(0, n).into_owned(), seed.1.rows(0, n).into_owned(), seed.2.rows(0, n).into_owned());
        let row = cbf_constraint(&e, &gains, model.as_ref(), &p, &v).unwrap();
        let cond = barrier_condition(&e, &gains, model.as_ref(), &p, &v, &u).unwrap();
        let scale = row.normal.norm() * u.norm() + row.offset.abs() + 1.0;
        prop_assert!((row.residual(&u) + cond).abs() <= 1e-10 * scale, "{} vs {}", row.residual(&u), cond);
        // h' is the first time derivative of h plus alpha(h).
        let h = e.h_value(&p).unwrap();
        let hdot = e.h_gradient(&p).unwrap().dot(&v);
        prop_assert!(rel_close(h_prime(&e, &gains, &p, &v).unwrap(), hdot + gains.alpha(h), 1.0, 1e-12));
    }

    // V̇ matches differences of V along the flow, and the CLF row is V̇ + W3 ≤ 0.
    #[test]
    fn lyapunov_derivative_identity(
        model in models(),
        gamma in 0.01..1.0f64,
        seed in (vector(3, 3.0), vector(3, 3.0), vector(3, 5.0), vector(3, 5.0)),
    ) {
        let n = model.dim();
        let c = ClfParams::default_for(n).with_gamma(gamma);
        let take = |x: &DVector<f64>| x.rows(0, n).into_owned();
        let (goal, p, v, u) = (take(&seed.0), take(&seed.1), take(&seed.2), take(&seed.3));
        let vdot = clf_derivative(&c, model.as_ref(), &goal, &p, &v, &u).unwrap();
        let acc = model.acceleration(&p, &v, &u);
        let eps = 1e-6;
        let at = |s: f64| clf_value(&c, &(&goal - (&p + &v * s)), &(&v + &acc * s)).unwrap();
        let fd = (at(eps) - at(-eps)) / (2.0 * eps);
        prop_assert!(rel_close(vdot, fd, 1.0, 1e-6), "{vdot} vs {fd}");

        let row = clf_constraint(&c, model.as_ref(), &goal, &p, &v).unwrap();
        let w3 = w3_value(&c, &(&goal - &p), &v).unwrap();
        let scale = row.normal.norm() * u.norm() + row.offset.abs() + 1.0;
        prop_assert!((row.residual(&u) - (vdot + w3)).abs() <= 1e-10 * scale);
    }
}
