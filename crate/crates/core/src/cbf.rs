//! Second-order barrier for an ellipsoidal safe set.
//!
//! Position enters the input only through `p̈`, so the ellipsoid barrier `h`
//! is lifted to `h'(p, v) = ∇h(p)·v + α(h(p))`. Keeping `h' ≥ 0` forward
//! invariant through `ḣ' ≥ -α'(h')` keeps `h ≥ 0` as well. Both class-K
//! functions are cubic: `α(s) = k1 s³`, `α'(s) = k2 s³`.

use nalgebra::{DVector, RowDVector};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::geometry::Ellipsoid;
use crate::linalg::{self, check_dim};

/// Gains of the two cubic class-K functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierGains {
    k1: f64,
    k2: f64,
}

impl BarrierGains {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::param("k1", format!("must be positive, got {k1}")));
        }
        if !(k2 > 0.0 && k2.is_finite()) {
            return Err(Error::param("k2", format!("must be positive, got {k2}")));
        }
        Ok(Self { k1, k2 })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// `α(s) = k1 s³`, defined on all of ℝ.
    pub fn alpha(&self, s: f64) -> f64 {
        self.k1 * s * s * s
    }

    /// `dα/ds = 3 k1 s²`.
    pub fn alpha_derivative(&self, s: f64) -> f64 {
        3.0 * self.k1 * s * s
    }

    /// `α'(s) = k2 s³`, the class-K function applied to `h'`.
    /// (The prime names the lifted barrier, not a derivative.)
    pub fn alpha_outer(&self, s: f64) -> f64 {
        self.k2 * s * s * s
    }
}

/// Canonical half-space `normal · u ≤ offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceConstraint {
    pub normal: RowDVector<f64>,
    pub offset: f64,
}

impl HalfSpaceConstraint {
    pub fn new(normal: RowDVector<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `normal · u - offset`; non-positive when satisfied.
    pub fn residual(&self, u: &DVector<f64>) -> f64 {
        self.normal.dot(&u.transpose()) - self.offset
    }

    pub fn is_degenerate(&self) -> bool {
        self.normal.iter().all(|&x| x == 0.0)
    }
}

/// `h'(p, v) = -2 (p - p0)ᵀ A v + α(h(p))`.
pub fn h_prime(e: &Ellipsoid, g: &BarrierGains, p: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dim("velocity", e.dim(), v)?;
    let h = e.h_value(p)?;
    let d = p - e.center();
    Ok(-2.0 * linalg::bilinear(&d, e.shape(), v) + g.alpha(h))
}

/// Left-hand side of the second-order barrier condition
/// `vᵀ∇²h v + ∇α(h)·v + ∇h·(f + g u) + α'(h') ≥ 0` for a given input.
pub fn barrier_condition<M: DynamicsModel + ?Sized>(
    e: &Ellipsoid,
    gains: &BarrierGains,
    model: &M,
    p: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    check_dim("input", e.dim(), u)?;
    let h = e.h_value(p)?;
    let hp = h_prime(e, gains, p, v)?;
    let grad = e.h_gradient(p)?;
    let accel = model.acceleration(p, v, u);
    Ok(linalg::bilinear(v, &e.h_hessian(), v)
        + gains.alpha_derivative(h) * grad.dot(v)
        + grad.dot(&accel)
        + gains.alpha_outer(hp))
}

/// Barrier condition as a half-space on `u`:
/// `2(p - p0)ᵀA g u ≤ -2vᵀAv + 3k1 h² (-2(p - p0)ᵀA v) - 2(p - p0)ᵀA f + α'(h')`.
///
/// At `p = p0` the normal vanishes and the row degenerates to the sign
/// condition `-2vᵀAv + α'(α(1)) ≥ 0`; it is still emitted so the solver can
/// report it.
pub fn cbf_constraint<M: DynamicsModel + ?Sized>(
    e: &Ellipsoid,
    gains: &BarrierGains,
    model: &M,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<HalfSpaceConstraint> {
    let n = e.dim();
    check_dim("position", n, p)?;
    check_dim("velocity", n, v)?;
    if model.dim() != n {
        return Err(Error::dim("dynamics model", n, model.dim()));
    }
    let a = e.shape();
    let d = p - e.center();
    let h = 1.0 - linalg::bilinear(&d, a, &d);
    let ad = a * &d;
    let dav = ad.dot(v);
    let hp = -2.0 * dav + gains.alpha(h);

    let f = model.drift(p, v);
    let gmat = model.input_map(p, v);
    let w1 = ad.transpose() * 2.0;
    let normal = &w1 * &gmat;
    let offset = -2.0 * linalg::bilinear(v, a, v) + gains.alpha_derivative(h) * (-2.0 * dav) - w1.dot(&f.transpose())
        + gains.alpha_outer(hp);
    Ok(HalfSpaceConstraint::new(normal, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DoubleIntegrator;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn corridor() -> Ellipsoid {
        Ellipsoid::new(v(&[0.0]), DMatrix::from_element(1, 1, 0.01)).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let g = BarrierGains::new(1.0, 1.0).unwrap();
        assert_eq!(g.alpha(1.0), 1.0);
        assert_eq!(g.alpha(0.0), 0.0);
        let g2 = BarrierGains::new(2.0, 1.0).unwrap();
        assert_eq!(g2.alpha(-0.5), -0.25);
        assert_eq!(g.alpha_derivative(0.0), 0.0);
        assert_eq!(g.alpha_derivative(2.0), 12.0);
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(BarrierGains::new(0.0, 1.0).is_err());
        assert!(BarrierGains::new(1.0, 0.0).is_err());
        assert!(BarrierGains::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn h_prime_examples() {
        let g = BarrierGains::new(1.0, 1.0).unwrap();
        let e = corridor();
        assert_eq!(h_prime(&e, &g, &v(&[0.0]), &v(&[7.0])).unwrap(), 1.0);
        assert!((h_prime(&e, &g, &v(&[10.0]), &v(&[-1.0])).unwrap() - 0.2).abs() < 1e-15);
        let hp = h_prime(&e, &g, &v(&[3.0]), &v(&[0.0])).unwrap();
        assert_eq!(hp, g.alpha(e.h_value(&v(&[3.0])).unwrap()));
    }

    #[test]
    fn constraint_at_center_degenerates() {
        let g = BarrierGains::new(1.0, 1.0).unwrap();
        let e = Ellipsoid::axis_aligned(v(&[1.0, 2.0]), &[2.0, 1.0]).unwrap();
        let model = DoubleIntegrator::new(2).unwrap();
        let vel = v(&[0.5, -0.3]);
        let c = cbf_constraint(&e, &g, &model, &v(&[1.0, 2.0]), &vel).unwrap();
        assert!(c.is_degenerate());
        let expected = -2.0 * linalg::bilinear(&vel, e.shape(), &vel) + g.alpha_outer(g.alpha(1.0));
        assert!((c.offset - expected).abs() < 1e-15);
    }

    #[test]
    fn constraint_at_rest_is_outer_alpha_of_alpha() {
        let g = BarrierGains::new(1.5, 0.7).unwrap();
        let e = Ellipsoid::axis_aligned(v(&[0.0, 0.0]), &[2.0, 1.0]).unwrap();
        let model = DoubleIntegrator::new(2).unwrap();
        let p = v(&[0.5, 0.3]);
        let c = cbf_constraint(&e, &g, &model, &p, &v(&[0.0, 0.0])).unwrap();
        let h = e.h_value(&p).unwrap();
        assert!((c.offset - g.alpha_outer(g.alpha(h))).abs() < 1e-15);
        assert!(c.offset > 0.0);
    }

    #[test]
    fn one_dimensional_hand_evaluation() {
        // Term by term: -2 v A v = -0.02; 3 k1 h² (-2 p A v) = 3 * 0.5625 * -0.1;
        // f = 0; h' = -0.1 + 0.75³ = 0.321875; α'(h') = h'³.
        let g = BarrierGains::new(1.0, 1.0).unwrap();
        let model = DoubleIntegrator::new(1).unwrap();
        let c = cbf_constraint(&corridor(), &g, &model, &v(&[5.0]), &v(&[1.0])).unwrap();
        let hp: f64 = -0.1 + 0.421875;
        let expected = -0.02 + 3.0 * 0.5625 * -0.1 + hp.powi(3);
        assert!((c.normal[0] - 0.1).abs() < 1e-15);
        assert!((c.offset - expected).abs() < 1e-14);
        assert!((c.offset - (-0.155_402_618_408_203_1)).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let g = BarrierGains::new(1.0, 1.0).unwrap();
        let model = DoubleIntegrator::new(1).unwrap();
        assert!(cbf_constraint(&corridor(), &g, &model, &v(&[5.0, 1.0]), &v(&[1.0])).is_err());
        let m2 = DoubleIntegrator::new(2).unwrap();
        assert!(cbf_constraint(&corridor(), &g, &m2, &v(&[5.0]), &v(&[1.0])).is_err());
    }
}
