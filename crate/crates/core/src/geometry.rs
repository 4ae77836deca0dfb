//! Ellipsoidal safe sets and the waypoint plans threaded through them.
//!
//! An ellipsoid `{p : (p - p0)ᵀ A (p - p0) ≤ 1}` is the superlevel set
//! `h(p) ≥ 0` of the concave barrier `h(p) = 1 - (p - p0)ᵀ A (p - p0)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_dim};
use crate::report::ValidationReport;

/// Default margin by which interior waypoints must clear both neighbouring
/// ellipsoid boundaries.
pub const DEFAULT_INTERIOR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    /// Builds an ellipsoid, requiring a symmetric positive definite shape.
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::param("center", "empty vector"));
        }
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::dim("ellipsoid shape", n, shape.nrows().max(shape.ncols())));
        }
        linalg::require_spd(&shape, "ellipsoid shape")?;
        let shape = linalg::symmetrize(&shape);
        Ok(Self { center, shape })
    }

    /// Axis-aligned ellipsoid with the given semi-axis lengths.
    pub fn axis_aligned(center: DVector<f64>, radii: &[f64]) -> Result<Self> {
        if radii.len() != center.len() {
            return Err(Error::dim("radii", center.len(), radii.len()));
        }
        let diag = DVector::from_iterator(radii.len(), radii.iter().map(|r| 1.0 / (r * r)));
        Self::new(center, DMatrix::from_diagonal(&diag))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// `h(p) = 1 - (p - p0)ᵀ A (p - p0)`: 1 at the center, 0 on the boundary.
    pub fn h_value(&self, p: &DVector<f64>) -> Result<f64> {
        check_dim("position", self.dim(), p)?;
        let d = p - &self.center;
        Ok(1.0 - linalg::bilinear(&d, &self.shape, &d))
    }

    /// Gradient of `h`: `-2 A (p - p0)`.
    pub fn h_gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("position", self.dim(), p)?;
        Ok(&self.shape * (p - &self.center) * -2.0)
    }

    /// Constant Hessian `-2A`.
    pub fn h_hessian(&self) -> DMatrix<f64> {
        &self.shape * -2.0
    }

    pub fn contains(&self, p: &DVector<f64>) -> Result<bool> {
        Ok(self.h_value(p)? >= 0.0)
    }

    /// Semi-axis extent along coordinate `axis`: `sqrt((A⁻¹)_jj)`.
    pub fn half_extent(&self, axis: usize) -> f64 {
        let inv = self
            .shape
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .expect("shape is SPD by construction");
        inv[(axis, axis)].sqrt()
    }
}

/// Ordered waypoints `x_0 … x_N` and the `N` ellipsoids `C_0 … C_{N-1}`,
/// where `C_i` is meant to enclose `x_i` and `x_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    waypoints: Vec<DVector<f64>>,
    ellipsoids: Vec<Ellipsoid>,
}

impl PathPlan {
    /// Checks structure only (counts and dimensions). Membership conditions
    /// are reported by [`validate_path_plan`].
    pub fn new(waypoints: Vec<DVector<f64>>, ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        if ellipsoids.is_empty() {
            return Err(Error::Schema("path plan needs at least one ellipsoid".into()));
        }
        if waypoints.len() != ellipsoids.len() + 1 {
            return Err(Error::Schema(format!(
                "path plan has {} waypoints but {} ellipsoids (expected {} waypoints)",
                waypoints.len(),
                ellipsoids.len(),
                ellipsoids.len() + 1
            )));
        }
        let n = ellipsoids[0].dim();
        for (i, w) in waypoints.iter().enumerate() {
            if w.len() != n {
                return Err(Error::Schema(format!(
                    "waypoints[{i}] has dimension {}, expected {n}",
                    w.len()
                )));
            }
        }
        for (i, e) in ellipsoids.iter().enumerate() {
            if e.dim() != n {
                return Err(Error::Schema(format!(
                    "ellipsoids[{i}] has dimension {}, expected {n}",
                    e.dim()
                )));
            }
        }
        Ok(Self { waypoints, ellipsoids })
    }

    pub fn dim(&self) -> usize {
        self.ellipsoids[0].dim()
    }

    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.ellipsoids.len()
    }

    pub fn waypoints(&self) -> &[DVector<f64>] {
        &self.waypoints
    }

    pub fn ellipsoids(&self) -> &[Ellipsoid] {
        &self.ellipsoids
    }

    pub fn waypoint(&self, i: usize) -> &DVector<f64> {
        &self.waypoints[i]
    }

    pub fn ellipsoid(&self, i: usize) -> &Ellipsoid {
        &self.ellipsoids[i]
    }

    pub fn goal(&self) -> &DVector<f64> {
        self.waypoints.last().expect("non-empty by construction")
    }
}

/// Reports every violated membership condition of a path plan:
/// both endpoints of segment `i` inside `C_i`, and every interior waypoint
/// strictly inside both neighbours by more than `interior_margin`.
pub fn validate_path_plan(plan: &PathPlan, interior_margin: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (i, e) in plan.ellipsoids().iter().enumerate() {
        for (k, label) in [(i, "start"), (i + 1, "end")] {
            let h = e.h_value(plan.waypoint(k)).expect("dims checked by PathPlan::new");
            if h < 0.0 {
                report.push(
                    format!("segment {i}"),
                    format!("{label} waypoint x_{k} lies outside ellipsoids[{i}]"),
                    Some(h),
                );
            }
        }
    }
    let n = plan.segments();
    for k in 1..n {
        let x = plan.waypoint(k);
        for j in [k - 1, k] {
            let h = plan.ellipsoid(j).h_value(x).expect("dims checked by PathPlan::new");
            if h <= interior_margin {
                report.push(
                    format!("waypoints[{k}]"),
                    format!("strict interior violated for ellipsoids[{j}]"),
                    Some(h),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Ellipsoid {
        Ellipsoid::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 0.01)).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn h_value_examples() {
        let e = corridor();
        assert_eq!(e.h_value(&v(&[10.0])).unwrap(), 0.0);
        assert_eq!(e.h_value(&v(&[0.0])).unwrap(), 1.0);
        assert!((e.h_value(&v(&[5.0])).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn h_value_dimension_mismatch() {
        let e = corridor();
        assert!(matches!(e.h_value(&v(&[1.0, 2.0])), Err(Error::Dimension { .. })));
        assert!(e.h_gradient(&v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn gradient_and_hessian_examples() {
        let e = corridor();
        assert!((e.h_gradient(&v(&[10.0])).unwrap()[0] + 0.2).abs() < 1e-15);
        assert_eq!(e.h_gradient(&v(&[0.0])).unwrap()[0], 0.0);
        assert!((e.h_hessian()[(0, 0)] + 0.02).abs() < 1e-15);
    }

    #[test]
    fn hessian_eigenvalues_scale_shape() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let e = Ellipsoid::new(v(&[1.0, -1.0]), a.clone()).unwrap();
        let hess = linalg::sym_eigenvalues(&e.h_hessian());
        let shape = linalg::sym_eigenvalues(&a);
        assert!(hess.iter().all(|&x| x < 0.0));
        assert!((hess[0] + 2.0 * shape[1]).abs() < 1e-12);
        assert!((hess[1] + 2.0 * shape[0]).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_spd_shape() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Ellipsoid::new(v(&[0.0, 0.0]), a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    fn plan(waypoints: &[f64]) -> PathPlan {
        let e0 = Ellipsoid::axis_aligned(v(&[0.0]), &[2.0]).unwrap();
        let e1 = Ellipsoid::axis_aligned(v(&[3.0]), &[2.0]).unwrap();
        PathPlan::new(waypoints.iter().map(|&x| v(&[x])).collect(), vec![e0, e1]).unwrap()
    }

    #[test]
    fn valid_plan_has_empty_report() {
        assert!(validate_path_plan(&plan(&[-1.0, 1.5, 4.0]), DEFAULT_INTERIOR_MARGIN).is_empty());
    }

    #[test]
    fn waypoint_outside_segment_ellipsoid() {
        let report = validate_path_plan(&plan(&[-1.0, 2.5, 4.0]), DEFAULT_INTERIOR_MARGIN);
        let f = report
            .iter()
            .find(|f| f.entity == "segment 0")
            .expect("segment 0 violation");
        assert!(f.margin.unwrap() < 0.0);
    }

    #[test]
    fn interior_waypoint_on_boundary() {
        // x_1 = 1 sits exactly on the boundary of C_1 = [1, 5].
        let report = validate_path_plan(&plan(&[-1.0, 1.0, 4.0]), DEFAULT_INTERIOR_MARGIN);
        assert_eq!(report.len(), 1);
        assert_eq!(report.findings[0].entity, "waypoints[1]");
        assert!(report.findings[0].message.contains("strict interior violated"));
    }

    #[test]
    fn plan_structure_errors() {
        let e0 = Ellipsoid::axis_aligned(v(&[0.0]), &[2.0]).unwrap();
        assert!(matches!(
            PathPlan::new(vec![v(&[0.0])], vec![e0.clone()]),
            Err(Error::Schema(_))
        ));
        assert!(PathPlan::new(vec![], vec![]).is_err());
        assert!(PathPlan::new(vec![v(&[0.0]), v(&[0.0, 1.0])], vec![e0]).is_err());
    }
}
