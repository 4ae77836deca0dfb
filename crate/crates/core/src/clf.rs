//! Block-quadratic Lyapunov function toward a waypoint.
//!
//! With position error `p̃ = goal - p` (so `d/dt p̃ = -v`),
//! `V = ½ [p̃; v]ᵀ [[P1, P2], [P2ᵀ, P3]] [p̃; v]` and the decrease demand is
//! `V̇ ≤ -W3` with `W3 = γ V`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cbf::HalfSpaceConstraint;
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::linalg::{self, check_dim};
use crate::report::ValidationReport;

#[derive(Debug, Clone, PartialEq)]
pub struct ClfParams {
    p1: DMatrix<f64>,
    p2: DMatrix<f64>,
    p3: DMatrix<f64>,
    gamma: f64,
}

impl ClfParams {
    /// Checks shapes, symmetry of the diagonal blocks and `gamma ≥ 0`.
    /// Definiteness is left to [`validate_clf_params`].
    pub fn new(p1: DMatrix<f64>, p2: DMatrix<f64>, p3: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let n = p1.nrows();
        if n == 0 {
            return Err(Error::param("P1", "empty matrix"));
        }
        for (name, m) in [("P1", &p1), ("P2", &p2), ("P3", &p3)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::param(
                    name,
                    format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        for (name, m) in [("P1", &p1), ("P3", &p3)] {
            let asym = linalg::asymmetry(m);
            if asym > 1e-12 * linalg::max_abs(m) {
                return Err(Error::NotSymmetric {
                    what: name.to_string(),
                    asymmetry: asym,
                });
            }
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be non-negative, got {gamma}")));
        }
        Ok(Self {
            p1: linalg::symmetrize(&p1),
            p2,
            p3: linalg::symmetrize(&p3),
            gamma,
        })
    }

    /// `P1 = I`, `P2 = -½ I`, `P3 = I`, `gamma = 0.1`.
    pub fn default_for(n: usize) -> Self {
        let eye = DMatrix::<f64>::identity(n, n);
        Self {
            p1: eye.clone(),
            p2: &eye * -0.5,
            p3: eye,
            gamma: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.p1.nrows()
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    pub fn p2(&self) -> &DMatrix<f64> {
        &self.p2
    }

    pub fn p3(&self) -> &DMatrix<f64> {
        &self.p3
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// The assembled `2n × 2n` block matrix.
    pub fn block(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        p.view_mut((0, 0), (n, n)).copy_from(&self.p1);
        p.view_mut((0, n), (n, n)).copy_from(&self.p2);
        p.view_mut((n, 0), (n, n)).copy_from(&self.p2.transpose());
        p.view_mut((n, n), (n, n)).copy_from(&self.p3);
        p
    }

    /// Row gradient of `V` with respect to `v`: `p̃ᵀP2 + vᵀP3` (as a column).
    fn velocity_gradient(&self, p_err: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.p2.tr_mul(p_err) + &self.p3 * v
    }
}

pub fn clf_value(c: &ClfParams, p_err: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let n = c.dim();
    check_dim("position error", n, p_err)?;
    check_dim("velocity", n, v)?;
    Ok(0.5
        * (linalg::bilinear(p_err, &c.p1, p_err)
            + 2.0 * linalg::bilinear(p_err, &c.p2, v)
            + linalg::bilinear(v, &c.p3, v)))
}

/// `W3 = γ V`.
pub fn w3_value(c: &ClfParams, p_err: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    Ok(c.gamma * clf_value(c, p_err, v)?)
}

/// Analytic `V̇` at `(p, v)` under input `u`:
/// `-p̃ᵀP1 v - vᵀP2ᵀv + (p̃ᵀP2 + vᵀP3)(f + g u)`.
pub fn clf_derivative<M: DynamicsModel + ?Sized>(
    c: &ClfParams,
    model: &M,
    goal: &DVector<f64>,
    p: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let n = c.dim();
    check_dim("goal", n, goal)?;
    check_dim("position", n, p)?;
    check_dim("velocity", n, v)?;
    check_dim("input", n, u)?;
    let p_err = goal - p;
    let w2 = c.velocity_gradient(&p_err, v);
    Ok(-linalg::bilinear(&p_err, &c.p1, v) - linalg::bilinear(v, &c.p2, v) + w2.dot(&model.acceleration(p, v, u)))
}

/// Decrease condition `V̇ ≤ -W3` as a half-space on `u`:
/// `(p̃ᵀP2 + vᵀP3) g u ≤ p̃ᵀP1 v + vᵀP2ᵀv - (p̃ᵀP2 + vᵀP3) f - W3`.
pub fn clf_constraint<M: DynamicsModel + ?Sized>(
    c: &ClfParams,
    model: &M,
    goal: &DVector<f64>,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<HalfSpaceConstraint> {
    let n = c.dim();
    check_dim("goal", n, goal)?;
    check_dim("position", n, p)?;
    check_dim("velocity", n, v)?;
    if model.dim() != n {
        return Err(Error::dim("dynamics model", n, model.dim()));
    }
    let p_err = goal - p;
    let w2 = c.velocity_gradient(&p_err, v);
    let f = model.drift(p, v);
    let g = model.input_map(p, v);
    let normal = w2.transpose() * g;
    let offset =
        linalg::bilinear(&p_err, &c.p1, v) + linalg::bilinear(v, &c.p2, v) - w2.dot(&f) - w3_value(c, &p_err, v)?;
    Ok(HalfSpaceConstraint::new(normal, offset))
}

/// Outcome of [`validate_clf_params`].
#[derive(Debug, Clone, Serialize)]
pub struct ClfDiagnostics {
    /// Violated definiteness conditions. Empty means the CLF is valid.
    pub report: ValidationReport,
    /// Quadratic bounds `λmin(P)/2 |z|² ≤ V ≤ λmax(P)/2 |z|²`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest `γ` for which `V̇ ≤ -γV` still holds on the manifold where
    /// the CLF constraint normal vanishes. `None` when the conditions that
    /// define it fail.
    pub gamma_bound: Option<f64>,
}

impl ClfDiagnostics {
    pub fn gamma_ok(&self, gamma: f64) -> bool {
        self.gamma_bound.is_some_and(|b| gamma <= b)
    }
}

/// Checks `P1 ≻ 0`, `P3 - P2ᵀP1⁻¹P2 ≻ 0`, `P2 ≺ 0` and
/// `P3 P2⁻¹ P1 - P2ᵀ ≺ 0`, reporting the offending extreme eigenvalue.
pub fn validate_clf_params(c: &ClfParams) -> ClfDiagnostics {
    let mut report = ValidationReport::new();
    let scale = linalg::max_abs(&c.block()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    let p_eigs = linalg::sym_eigenvalues(&c.block());
    let lambda_min = p_eigs[0];
    let lambda_max = *p_eigs.last().unwrap();

    let ev1 = linalg::sym_eigenvalues(&c.p1);
    let p1_inv = if ev1[0] > tol {
        c.p1.clone().try_inverse()
    } else {
        report.push("controller.P1", "P1 not positive definite", Some(ev1[0]));
        None
    };

    if let Some(p1_inv) = &p1_inv {
        let schur = &c.p3 - c.p2.transpose() * p1_inv * &c.p2;
        let ev = linalg::sym_eigenvalues(&schur);
        if ev[0] <= tol {
            report.push(
                "controller.P3",
                "Schur complement P3 - P2ᵀP1⁻¹P2 not positive definite",
                Some(ev[0]),
            );
        }
    }

    let ev2 = linalg::sym_eigenvalues(&c.p2);
    let p2_max = *ev2.last().unwrap();
    if p2_max >= -tol {
        report.push("controller.P2", "P2 not negative definite", Some(p2_max));
    }

    let mut gamma_bound = None;
    if let Some(p2_inv) = c.p2.clone().try_inverse() {
        let m = &c.p3 * &p2_inv * &c.p1 - c.p2.transpose();
        let evm = linalg::sym_eigenvalues(&m);
        let m_max = *evm.last().unwrap();
        if m_max >= -tol {
            report.push("controller.P3", "P3 P2⁻¹ P1 - P2ᵀ not negative definite", Some(m_max));
        }
        if report.is_empty() {
            gamma_bound = singular_manifold_gamma_bound(c, &p2_inv, &m);
        }
    } else {
        report.push("controller.P2", "P2 is singular", Some(0.0));
    }

    ClfDiagnostics {
        report,
        lambda_min,
        lambda_max,
        gamma_bound,
    }
}

/// On `p̃ = -P2⁻ᵀ P3 v` the constraint normal vanishes and the drift-free
/// part of `V̇` is `vᵀ M v`. The bound is the smallest generalized
/// eigenvalue of `(-M, ½ TᵀPT)` with `T = [-P2⁻ᵀP3; I]`.
fn singular_manifold_gamma_bound(c: &ClfParams, p2_inv: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<f64> {
    let n = c.dim();
    let mut t = DMatrix::zeros(2 * n, n);
    t.view_mut((0, 0), (n, n)).copy_from(&(-p2_inv.transpose() * &c.p3));
    t.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let q = linalg::symmetrize(&(t.transpose() * c.block() * &t * 0.5));
    let l = linalg::cholesky(&q).ok()?;
    let l_inv = l.try_inverse()?;
    let neg_m = (m + m.transpose()) * -0.5;
    let k = &l_inv * neg_m * l_inv.transpose();
    linalg::sym_eigenvalues(&k).first().copied()
}
