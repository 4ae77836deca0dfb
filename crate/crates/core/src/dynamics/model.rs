use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// Second-order system `ṗ = v, v̇ = f(p, v) + g(p, v) u` with `n` positions
/// and `n` inputs.
pub trait DynamicsModel {
    fn dim(&self) -> usize;

    /// Drift `f(p, v)`.
    fn drift(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// Input matrix `g(p, v)`, required to have full row rank.
    fn input_map(&self, p: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// Full acceleration `f + g u`.
    fn acceleration(&self, p: &DVector<f64>, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(p, v) + self.input_map(p, v) * u
    }
}

/// `v̇ = u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegrator {
    n: usize,
}

impl DoubleIntegrator {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "dimension must be at least 1"));
        }
        Ok(Self { n })
    }
}

impl DynamicsModel for DoubleIntegrator {
    fn dim(&self) -> usize {
        self.n
    }

    fn drift(&self, _p: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.n)
    }

    fn input_map(&self, _p: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n)
    }
}

/// Planar point mass with viscous damping and cross-coupled actuation:
/// `m v̇_x = -b v_x + u_x - 0.5 u_y`, `m v̇_y = -b v_y + u_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedCoupled2D {
    mass: f64,
    damping: f64,
}

impl DampedCoupled2D {
    pub fn new(mass: f64, damping: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::param("mass", format!("must be positive, got {mass}")));
        }
        if !(damping > 0.0 && damping.is_finite()) {
            return Err(Error::param("damping", format!("must be positive, got {damping}")));
        }
        Ok(Self { mass, damping })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

impl DynamicsModel for DampedCoupled2D {
    fn dim(&self) -> usize {
        2
    }

    fn drift(&self, _p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v * (-self.damping / self.mass)
    }

    fn input_map(&self, _p: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        let k = 1.0 / self.mass;
        DMatrix::from_row_slice(2, 2, &[k, -0.5 * k, 0.0, k])
    }
}

/// `v̇ = F_p p + F_v v + G u` with constant matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    fp: DMatrix<f64>,
    fv: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(fp: DMatrix<f64>, fv: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        for (name, m) in [("f_p", &fp), ("f_v", &fv), ("g", &g)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::param(
                    name,
                    format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        if n == 0 {
            return Err(Error::param("g", "empty matrix"));
        }
        let model = Self { fp, fv, g };
        if let Some(sigma) = rank_deficiency(&model.g) {
            return Err(Error::param(
                "g",
                format!("not full row rank (sigma_min/sigma_max = {sigma:e})"),
            ));
        }
        Ok(model)
    }

    pub fn fp(&self) -> &DMatrix<f64> {
        &self.fp
    }

    pub fn fv(&self) -> &DMatrix<f64> {
        &self.fv
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
}

impl DynamicsModel for LinearModel {
    fn dim(&self) -> usize {
        self.g.nrows()
    }

    fn drift(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.fp * p + &self.fv * v
    }

    fn input_map(&self, _p: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        self.g.clone()
    }
}

/// The shipped model family, selected by tag in scenario files.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    DoubleIntegrator(DoubleIntegrator),
    DampedCoupled2D(DampedCoupled2D),
    Linear(LinearModel),
}

impl Dynamics {
    pub fn tag(&self) -> &'static str {
        match self {
            Dynamics::DoubleIntegrator(_) => "double_integrator",
            Dynamics::DampedCoupled2D(_) => "damped_coupled_2d",
            Dynamics::Linear(_) => "linear",
        }
    }

    fn inner(&self) -> &dyn DynamicsModel {
        match self {
            Dynamics::DoubleIntegrator(m) => m,
            Dynamics::DampedCoupled2D(m) => m,
            Dynamics::Linear(m) => m,
        }
    }
}

impl DynamicsModel for Dynamics {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn drift(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner().drift(p, v)
    }

    fn input_map(&self, p: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.inner().input_map(p, v)
    }
}

/// Ratio of smallest to largest singular value when it falls below `1e-12`.
fn rank_deficiency(g: &DMatrix<f64>) -> Option<f64> {
    let sv = g.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min / max < 1e-12 {
        Some(if max > 0.0 { min / max } else { 0.0 })
    } else {
        None
    }
}

/// Checks full row rank of `g` at each sample state.
pub fn check_full_row_rank<M: DynamicsModel + ?Sized>(
    model: &M,
    states: &[(DVector<f64>, DVector<f64>)],
) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (k, (p, v)) in states.iter().enumerate() {
        let g = model.input_map(p, v);
        if g.nrows() != model.dim() {
            report.push(format!("dynamics.sample[{k}]"), "input map has wrong row count", None);
        } else if let Some(ratio) = rank_deficiency(&g) {
            report.push(
                format!("dynamics.sample[{k}]"),
                "input map is not full row rank",
                Some(ratio),
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn damped_coupled_matches_component_equations() {
        let m = DampedCoupled2D::new(2.0, 0.5).unwrap();
        let p = DVector::from_column_slice(&[0.0, 0.0]);
        let v = DVector::from_column_slice(&[1.0, -2.0]);
        let u = DVector::from_column_slice(&[0.3, 0.8]);
        let a = m.acceleration(&p, &v, &u);
        assert!((2.0 * a[0] - (-0.5 * 1.0 + 0.3 - 0.5 * 0.8)).abs() < 1e-15);
        assert!((2.0 * a[1] - (-0.5 * -2.0 + 0.8)).abs() < 1e-15);
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(DampedCoupled2D::new(0.0, 1.0).is_err());
        assert!(DampedCoupled2D::new(1.0, -1.0).is_err());
        assert!(DoubleIntegrator::new(0).is_err());
        let z = DMatrix::zeros(2, 2);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(LinearModel::new(z.clone(), z.clone(), singular).is_err());
        assert!(LinearModel::new(z.clone(), z, DMatrix::identity(2, 2)).is_ok());
    }

    #[test]
    fn rank_check_flags_nothing_for_shipped_models() {
        let states = vec![(DVector::zeros(2), DVector::from_element(2, 1.0))];
        let m = Dynamics::DampedCoupled2D(DampedCoupled2D::new(1.0, 0.5).unwrap());
        assert!(check_full_row_rank(&m, &states).is_empty());
    }
}
