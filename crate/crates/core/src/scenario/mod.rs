//! Scenario files, run summaries and SVG rendering.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "corridor",
//!   "n": 1,
//!   "dynamics": { "type": "double_integrator" },
//!   "waypoints": [[0.0], [5.0]],
//!   "ellipsoids": [{ "center": [0.0], "shape": [[0.01]] }],
//!   "controller": {
//!     "P1": [[1.0]], "P2": [[-0.5]], "P3": [[1.0]], "H": [[1.0]],
//!     "gamma": 0.1, "k1": 1.0, "k2": 1.0
//!   },
//!   "sim": { "dt": 0.001, "t_max": 60.0, "zoh": false }
//! }
//! ```
//!
//! `dynamics.type` is one of `double_integrator`, `damped_coupled_2d`
//! (with `mass`, `damping`) or `linear` (with matrices `f_p`, `f_v`, `g`).
//! Optional keys: `obstacles: [{min, max}]` (drawn only) and the controller
//! fields `switch_margin`, `goal_pos_tol`, `goal_vel_tol`, `gamma_backoff`.

mod summary;
mod svg;

pub use summary::{write_summary, SegmentSummary, Summary};
pub use svg::{render_overlay, render_svg};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cbf::BarrierGains;
use crate::clf::{validate_clf_params, ClfDiagnostics, ClfParams};
use crate::dynamics::{
    check_full_row_rank, simulate, DampedCoupled2D, DoubleIntegrator, Dynamics, LinearModel, SimConfig, SimRun,
};
use crate::error::{Error, Result};
use crate::geometry::{validate_path_plan, Ellipsoid, PathPlan, DEFAULT_INTERIOR_MARGIN};
use crate::hybrid::{ControllerParams, DEFAULT_GOAL_POS_TOL, DEFAULT_GOAL_VEL_TOL, DEFAULT_SWITCH_MARGIN};
use crate::linalg;
use crate::report::ValidationReport;

/// Relative asymmetry tolerated (and removed) when loading matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Axis-aligned box, carried for rendering only.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dynamics: Dynamics,
    pub plan: PathPlan,
    pub obstacles: Vec<Obstacle>,
    pub controller: ControllerParams,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.plan.dim()
    }

    /// Definiteness findings and the gamma bound of the CLF.
    pub fn clf_diagnostics(&self) -> ClfDiagnostics {
        validate_clf_params(self.controller.clf())
    }

    /// Advisory messages that do not make the scenario invalid.
    pub fn warnings(&self) -> Vec<String> {
        let diag = self.clf_diagnostics();
        let gamma = self.controller.clf().gamma();
        match diag.gamma_bound {
            Some(bound) if gamma > bound => vec![format!(
                "controller.gamma = {gamma} exceeds the bound {bound:.6} on the CLF singular manifold; the QP may become infeasible"
            )],
            _ => vec![],
        }
    }

    pub fn simulate(&self) -> Result<SimRun> {
        self.simulate_with(self.sim)
    }

    pub fn simulate_with(&self, cfg: SimConfig) -> Result<SimRun> {
        simulate(&self.plan, &self.dynamics, &self.controller, cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioDoc::from(self)).expect("scenario serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    n: usize,
    dynamics: DynamicsDoc,
    waypoints: Vec<Vec<f64>>,
    ellipsoids: Vec<EllipsoidDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    obstacles: Vec<ObstacleDoc>,
    controller: ControllerDoc,
    sim: SimDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
enum DynamicsDoc {
    #[serde(rename = "double_integrator")]
    DoubleIntegrator,
    #[serde(rename = "damped_coupled_2d")]
    DampedCoupled2D { mass: f64, damping: f64 },
    #[serde(rename = "linear")]
    Linear {
        f_p: Vec<Vec<f64>>,
        f_v: Vec<Vec<f64>>,
        g: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipsoidDoc {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleDoc {
    min: Vec<f64>,
    max: Vec<f64>,
}

fn default_switch_margin() -> f64 {
    DEFAULT_SWITCH_MARGIN
}

fn default_goal_pos_tol() -> f64 {
    DEFAULT_GOAL_POS_TOL
}

fn default_goal_vel_tol() -> f64 {
    DEFAULT_GOAL_VEL_TOL
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerDoc {
    #[serde(rename = "P1")]
    p1: Vec<Vec<f64>>,
    #[serde(rename = "P2")]
    p2: Vec<Vec<f64>>,
    #[serde(rename = "P3")]
    p3: Vec<Vec<f64>>,
    gamma: f64,
    k1: f64,
    k2: f64,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(default = "default_switch_margin")]
    switch_margin: f64,
    #[serde(default = "default_goal_pos_tol")]
    goal_pos_tol: f64,
    #[serde(default = "default_goal_vel_tol")]
    goal_vel_tol: f64,
    #[serde(default)]
    gamma_backoff: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    dt: f64,
    t_max: f64,
    /// Zero-order hold of the input over each step.
    #[serde(default)]
    zoh: bool,
}

fn vec_to_doc(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        let c = &s.controller;
        let dynamics = match &s.dynamics {
            Dynamics::DoubleIntegrator(_) => DynamicsDoc::DoubleIntegrator,
            Dynamics::DampedCoupled2D(m) => DynamicsDoc::DampedCoupled2D {
                mass: m.mass(),
                damping: m.damping(),
            },
            Dynamics::Linear(m) => DynamicsDoc::Linear {
                f_p: linalg::to_rows(m.fp()),
                f_v: linalg::to_rows(m.fv()),
                g: linalg::to_rows(m.g()),
            },
        };
        ScenarioDoc {
            name: s.name.clone(),
            n: s.dim(),
            dynamics,
            waypoints: s.plan.waypoints().iter().map(vec_to_doc).collect(),
            ellipsoids: s
                .plan
                .ellipsoids()
                .iter()
                .map(|e| EllipsoidDoc {
                    center: vec_to_doc(e.center()),
                    shape: linalg::to_rows(e.shape()),
                })
                .collect(),
            obstacles: s
                .obstacles
                .iter()
                .map(|o| ObstacleDoc {
                    min: vec_to_doc(&o.min),
                    max: vec_to_doc(&o.max),
                })
                .collect(),
            controller: ControllerDoc {
                p1: linalg::to_rows(c.clf().p1()),
                p2: linalg::to_rows(c.clf().p2()),
                p3: linalg::to_rows(c.clf().p3()),
                gamma: c.clf().gamma(),
                k1: c.barrier().k1(),
                k2: c.barrier().k2(),
                h: linalg::to_rows(c.cost()),
                switch_margin: c.switch_margin(),
                goal_pos_tol: c.goal_pos_tol(),
                goal_vel_tol: c.goal_vel_tol(),
                gamma_backoff: c.gamma_backoff(),
            },
            sim: SimDoc {
                dt: s.sim.dt,
                t_max: s.sim.t_max,
                zoh: s.sim.zoh,
            },
        }
    }
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Syntax | Category::Eof => Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
        Category::Data | Category::Io => Error::Schema(e.to_string()),
    }
}

/// Builds matrices and vectors, collecting every invariant violation.
struct Loader {
    n: usize,
    report: ValidationReport,
}

impl Loader {
    fn vector(&self, xs: &[f64], path: &str) -> Result<DVector<f64>> {
        if xs.len() != self.n {
            return Err(Error::Schema(format!(
                "{path}: expected {} entries, got {}",
                self.n,
                xs.len()
            )));
        }
        Ok(DVector::from_column_slice(xs))
    }

    fn matrix(&self, rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
        let m = linalg::from_rows(rows, path)?;
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(Error::Schema(format!(
                "{path}: expected {n}x{n} matrix, got {}x{}",
                m.nrows(),
                m.ncols(),
                n = self.n
            )));
        }
        Ok(m)
    }

    /// Symmetrizes `m` if its asymmetry is within tolerance, else records a
    /// finding and returns it unchanged.
    fn symmetric(&mut self, m: DMatrix<f64>, path: &str) -> DMatrix<f64> {
        let asym = linalg::asymmetry(&m);
        if asym > SYMMETRY_TOL * linalg::max_abs(&m).max(1.0) {
            self.report.push(path, "matrix is not symmetric", Some(asym));
            m
        } else {
            linalg::symmetrize(&m)
        }
    }
}

/// Parses and fully validates a scenario document.
///
/// Syntax errors carry the line and column. Missing, unknown or mis-shaped
/// fields are schema errors. All remaining invariant violations are
/// collected into one [`Error::Validation`] report.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(json_error)?;
    build(doc)
}

fn build(doc: ScenarioDoc) -> Result<Scenario> {
    let n = doc.n;
    if n == 0 {
        return Err(Error::Schema("n: dimension must be at least 1".into()));
    }
    if doc.ellipsoids.is_empty() {
        return Err(Error::Schema("ellipsoids: at least one ellipsoid is required".into()));
    }
    if doc.waypoints.len() != doc.ellipsoids.len() + 1 {
        return Err(Error::Schema(format!(
            "waypoints: {} waypoints for {} ellipsoids, expected {}",
            doc.waypoints.len(),
            doc.ellipsoids.len(),
            doc.ellipsoids.len() + 1
        )));
    }
    let mut ld = Loader {
        n,
        report: ValidationReport::new(),
    };

    let waypoints = doc
        .waypoints
        .iter()
        .enumerate()
        .map(|(k, w)| ld.vector(w, &format!("waypoints[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    for (k, w) in waypoints.iter().enumerate() {
        if w.iter().any(|x| !x.is_finite()) {
            ld.report.push(format!("waypoints[{k}]"), "value is not finite", None);
        }
    }

    let mut ellipsoids = Vec::with_capacity(doc.ellipsoids.len());
    for (i, e) in doc.ellipsoids.iter().enumerate() {
        let path = format!("ellipsoids[{i}]");
        let center = ld.vector(&e.center, &format!("{path}.center"))?;
        let shape = ld.matrix(&e.shape, &format!("{path}.shape"))?;
        let shape = ld.symmetric(shape, &format!("{path}.shape"));
        match Ellipsoid::new(center, shape) {
            Ok(e) => ellipsoids.push(e),
            Err(Error::NotPositiveDefinite { pivot, value, .. }) => ld.report.push(
                format!("{path}.shape"),
                format!("shape matrix is not positive definite (pivot {pivot})"),
                Some(value),
            ),
            Err(Error::NotSymmetric { .. }) => {}
            Err(other) => ld.report.push(path, other.to_string(), None),
        }
    }

    let obstacles = doc
        .obstacles
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let path = format!("obstacles[{j}]");
            let min = ld.vector(&o.min, &format!("{path}.min"))?;
            let max = ld.vector(&o.max, &format!("{path}.max"))?;
            if min.iter().zip(max.iter()).any(|(a, b)| !(a <= b)) {
                ld.report.push(path, "min exceeds max", None);
            }
            Ok(Obstacle { min, max })
        })
        .collect::<Result<Vec<_>>>()?;

    let dynamics = match &doc.dynamics {
        DynamicsDoc::DoubleIntegrator => Some(Dynamics::DoubleIntegrator(DoubleIntegrator::new(n)?)),
        DynamicsDoc::DampedCoupled2D { mass, damping } => {
            if n != 2 {
                return Err(Error::Schema(format!(
                    "dynamics: damped_coupled_2d requires n = 2, got {n}"
                )));
            }
            match DampedCoupled2D::new(*mass, *damping) {
                Ok(m) => Some(Dynamics::DampedCoupled2D(m)),
                Err(e) => {
                    ld.report.push("dynamics", e.to_string(), None);
                    None
                }
            }
        }
        DynamicsDoc::Linear { f_p, f_v, g } => {
            let fp = ld.matrix(f_p, "dynamics.f_p")?;
            let fv = ld.matrix(f_v, "dynamics.f_v")?;
            let g = ld.matrix(g, "dynamics.g")?;
            match LinearModel::new(fp, fv, g) {
                Ok(m) => Some(Dynamics::Linear(m)),
                Err(e) => {
                    ld.report.push("dynamics.g", e.to_string(), None);
                    None
                }
            }
        }
    };

    let c = &doc.controller;
    let p1 = ld.matrix(&c.p1, "controller.P1")?;
    let p1 = ld.symmetric(p1, "controller.P1");
    let p2 = ld.matrix(&c.p2, "controller.P2")?;
    let p3 = ld.matrix(&c.p3, "controller.P3")?;
    let p3 = ld.symmetric(p3, "controller.P3");
    let h = ld.matrix(&c.h, "controller.H")?;
    let h = ld.symmetric(h, "controller.H");
    if let Err(Error::NotPositiveDefinite { value, .. }) = linalg::require_spd(&h, "H") {
        ld.report
            .push("controller.H", "QP cost is not positive definite", Some(value));
    }
    if !(c.gamma >= 0.0 && c.gamma.is_finite()) {
        ld.report
            .push("controller.gamma", "must be non-negative", Some(c.gamma));
    }
    let barrier = match BarrierGains::new(c.k1, c.k2) {
        Ok(b) => Some(b),
        Err(Error::InvalidParam { name, reason }) => {
            ld.report.push(format!("controller.{name}"), reason, None);
            None
        }
        Err(other) => return Err(other),
    };
    if !(c.switch_margin >= 0.0 && c.switch_margin.is_finite()) {
        ld.report.push(
            "controller.switch_margin",
            "must be non-negative",
            Some(c.switch_margin),
        );
    }
    for (name, tol) in [("goal_pos_tol", c.goal_pos_tol), ("goal_vel_tol", c.goal_vel_tol)] {
        if !(tol > 0.0 && tol.is_finite()) {
            ld.report
                .push(format!("controller.{name}"), "must be positive", Some(tol));
        }
    }
    let clf = ClfParams::new(p1, p2, p3, c.gamma.max(0.0)).ok();
    if let Some(clf) = &clf {
        ld.report.extend(validate_clf_params(clf).report);
    }

    if !(doc.sim.dt > 0.0 && doc.sim.dt.is_finite()) {
        ld.report.push("sim.dt", "must be positive", Some(doc.sim.dt));
    }
    if !(doc.sim.t_max >= 0.0 && doc.sim.t_max.is_finite()) {
        ld.report.push("sim.t_max", "must be non-negative", Some(doc.sim.t_max));
    }

    let plan = if ellipsoids.len() == doc.ellipsoids.len() {
        let plan = PathPlan::new(waypoints, ellipsoids)?;
        ld.report.extend(validate_path_plan(&plan, DEFAULT_INTERIOR_MARGIN));
        Some(plan)
    } else {
        None
    };
    if let (Some(plan), Some(model)) = (&plan, &dynamics) {
        let samples: Vec<_> = plan
            .waypoints()
            .iter()
            .map(|w| (w.clone(), DVector::zeros(n)))
            .collect();
        ld.report.extend(check_full_row_rank(model, &samples));
    }

    if !ld.report.is_empty() {
        return Err(Error::Validation(ld.report));
    }
    let (Some(plan), Some(dynamics), Some(clf), Some(barrier)) = (plan, dynamics, clf, barrier) else {
        unreachable!("every missing component leaves a finding");
    };
    let controller = ControllerParams::new(clf, barrier, h)?
        .with_tolerances(c.switch_margin, c.goal_pos_tol, c.goal_vel_tol)?
        .with_gamma_backoff(c.gamma_backoff);
    Ok(Scenario {
        name: doc.name,
        dynamics,
        plan,
        obstacles,
        controller,
        sim: SimConfig::new(doc.sim.dt, doc.sim.t_max)?.with_zoh(doc.sim.zoh),
    })
}
