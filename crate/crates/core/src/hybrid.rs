//! Per-segment CLF/CBF controller, the switching supervisor, and an offline
//! feasibility audit of the segment QPs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cbf::{cbf_constraint, h_prime, BarrierGains};
use crate::clf::{clf_constraint, clf_value, validate_clf_params, ClfParams};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::geometry::{Ellipsoid, PathPlan};
use crate::linalg;
use crate::qp::{self, QpProblem};

pub const DEFAULT_SWITCH_MARGIN: f64 = 1e-6;
pub const DEFAULT_GOAL_POS_TOL: f64 = 1e-2;
pub const DEFAULT_GOAL_VEL_TOL: f64 = 1e-2;
pub const MAX_GAMMA_BACKOFFS: u32 = 20;

/// Index of the CLF row in the segment QP.
pub const CLF_ROW: usize = 0;
/// Index of the CBF row in the segment QP.
pub const CBF_ROW: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    clf: ClfParams,
    barrier: BarrierGains,
    cost: DMatrix<f64>,
    switch_margin: f64,
    goal_pos_tol: f64,
    goal_vel_tol: f64,
    gamma_backoff: bool,
}

impl ControllerParams {
    pub fn new(clf: ClfParams, barrier: BarrierGains, cost: DMatrix<f64>) -> Result<Self> {
        if cost.nrows() != clf.dim() {
            return Err(Error::dim("QP cost H", clf.dim(), cost.nrows()));
        }
        linalg::require_spd(&cost, "H")?;
        Ok(Self {
            clf,
            barrier,
            cost,
            switch_margin: DEFAULT_SWITCH_MARGIN,
            goal_pos_tol: DEFAULT_GOAL_POS_TOL,
            goal_vel_tol: DEFAULT_GOAL_VEL_TOL,
            gamma_backoff: false,
        })
    }

    /// Default CLF blocks, `k1 = k2 = 1` and `H = I`.
    pub fn default_for(n: usize) -> Self {
        Self::new(
            ClfParams::default_for(n),
            BarrierGains::new(1.0, 1.0).expect("positive gains"),
            DMatrix::identity(n, n),
        )
        .expect("identity cost is SPD")
    }

    pub fn with_tolerances(mut self, switch_margin: f64, goal_pos_tol: f64, goal_vel_tol: f64) -> Result<Self> {
        if !(switch_margin >= 0.0 && switch_margin.is_finite()) {
            return Err(Error::param(
                "switch_margin",
                format!("must be non-negative, got {switch_margin}"),
            ));
        }
        if !(goal_pos_tol > 0.0) {
            return Err(Error::param(
                "goal_pos_tol",
                format!("must be positive, got {goal_pos_tol}"),
            ));
        }
        if !(goal_vel_tol > 0.0) {
            return Err(Error::param(
                "goal_vel_tol",
                format!("must be positive, got {goal_vel_tol}"),
            ));
        }
        self.switch_margin = switch_margin;
        self.goal_pos_tol = goal_pos_tol;
        self.goal_vel_tol = goal_vel_tol;
        Ok(self)
    }

    pub fn with_gamma_backoff(mut self, on: bool) -> Self {
        self.gamma_backoff = on;
        self
    }

    pub fn with_barrier(mut self, barrier: BarrierGains) -> Self {
        self.barrier = barrier;
        self
    }

    pub fn with_clf(mut self, clf: ClfParams) -> Result<Self> {
        if clf.dim() != self.clf.dim() {
            return Err(Error::dim("CLF blocks", self.clf.dim(), clf.dim()));
        }
        self.clf = clf;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.clf.dim()
    }

    pub fn clf(&self) -> &ClfParams {
        &self.clf
    }

    pub fn barrier(&self) -> &BarrierGains {
        &self.barrier
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn switch_margin(&self) -> f64 {
        self.switch_margin
    }

    pub fn goal_pos_tol(&self) -> f64 {
        self.goal_pos_tol
    }

    pub fn goal_vel_tol(&self) -> f64 {
        self.goal_vel_tol
    }

    pub fn gamma_backoff(&self) -> bool {
        self.gamma_backoff
    }
}

/// Hybrid mode: which segment controller is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SupervisorState {
    pub segment: usize,
    pub finished: bool,
}

/// Which QP rows are active at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveSet {
    pub clf: bool,
    pub cbf: bool,
}

impl ActiveSet {
    fn from_indices(idx: &[usize]) -> Self {
        Self {
            clf: idx.contains(&CLF_ROW),
            cbf: idx.contains(&CBF_ROW),
        }
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.clf, self.cbf) {
            (false, false) => "none",
            (true, false) => "clf",
            (false, true) => "cbf",
            (true, true) => "clf+cbf",
        })
    }
}

impl FromStr for ActiveSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::default(),
            "clf" => Self { clf: true, cbf: false },
            "cbf" => Self { clf: false, cbf: true },
            "clf+cbf" => Self { clf: true, cbf: true },
            other => return Err(Error::Input(format!("unknown active set '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDiagnostics {
    pub h: f64,
    pub h_prime: f64,
    pub lyapunov: f64,
    pub active: ActiveSet,
    /// `gamma` actually used, lower than configured after backoff.
    pub gamma: f64,
    pub backoffs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    pub diagnostics: ControlDiagnostics,
}

/// Segment QP: drive toward `x_{i+1}` under the barrier of `C_i`.
///
/// The state is expected inside `C_i` and `C'_i`; nothing is enforced here,
/// since Runge-Kutta stage states may sit marginally outside.
pub fn control<M: DynamicsModel + ?Sized>(
    params: &ControllerParams,
    plan: &PathPlan,
    model: &M,
    s: SupervisorState,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<ControlOutput> {
    let i = s.segment;
    if i >= plan.segments() {
        return Err(Error::Input(format!("segment {i} out of range")));
    }
    let e = plan.ellipsoid(i);
    let goal = plan.waypoint(i + 1);
    let cbf = cbf_constraint(e, &params.barrier, model, p, v)?;

    let mut clf = params.clf.clone();
    let mut backoffs = 0;
    loop {
        let clf_row = clf_constraint(&clf, model, goal, p, v)?;
        let problem = QpProblem::new(params.cost.clone(), vec![clf_row, cbf.clone()])?;
        match qp::solve(&problem) {
            Ok(sol) => {
                let h = e.h_value(p)?;
                let diagnostics = ControlDiagnostics {
                    h,
                    h_prime: h_prime(e, &params.barrier, p, v)?,
                    lyapunov: clf_value(&clf, &(goal - p), v)?,
                    active: ActiveSet::from_indices(&sol.active_set),
                    gamma: clf.gamma(),
                    backoffs,
                };
                return Ok(ControlOutput { u: sol.u, diagnostics });
            }
            Err(err @ Error::Infeasible(_)) => {
                if !params.gamma_backoff || backoffs >= MAX_GAMMA_BACKOFFS {
                    return Err(err);
                }
                backoffs += 1;
                let gamma = clf.gamma() * 0.5;
                log::warn!("segment {i}: QP infeasible, retrying with gamma = {gamma:e} (backoff {backoffs})");
                clf = clf.with_gamma(gamma);
            }
            Err(err) => return Err(err),
        }
    }
}

/// True when `(p, v)` lies in `C_{i+1} ∩ C'_{i+1}` with margin `ε_sw`.
pub fn should_switch(
    params: &ControllerParams,
    plan: &PathPlan,
    s: SupervisorState,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> bool {
    let next = s.segment + 1;
    if s.finished || next >= plan.segments() {
        return false;
    }
    let e = plan.ellipsoid(next);
    let margin = params.switch_margin;
    match (e.h_value(p), h_prime(e, &params.barrier, p, v)) {
        (Ok(h), Ok(hp)) => h >= margin && hp >= margin,
        _ => false,
    }
}

/// Advances the supervisor by at most one switch, or marks the run finished
/// once the final waypoint is reached within tolerance.
pub fn step_supervisor(
    params: &ControllerParams,
    plan: &PathPlan,
    s: SupervisorState,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> SupervisorState {
    if s.finished {
        return s;
    }
    if should_switch(params, plan, s, p, v) {
        return SupervisorState {
            segment: s.segment + 1,
            finished: false,
        };
    }
    if s.segment + 1 == plan.segments()
        && (p - plan.goal()).norm() <= params.goal_pos_tol
        && v.norm() <= params.goal_vel_tol
    {
        return SupervisorState {
            segment: s.segment,
            finished: true,
        };
    }
    s
}

/// `u = gᵀ(g gᵀ)⁻¹(-f + u*)`: the input that makes the plant behave as the
/// double integrator `v̇ = u*`.
pub fn feedback_linearized_input<M: DynamicsModel + ?Sized>(
    model: &M,
    p: &DVector<f64>,
    v: &DVector<f64>,
    u_star: &DVector<f64>,
) -> Result<DVector<f64>> {
    let g = model.input_map(p, v);
    let ggt = &g * g.transpose();
    let rhs = u_star - model.drift(p, v);
    let y = ggt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Input("input map lost full row rank".into()))?;
    Ok(g.transpose() * y)
}

/// Feasibility of the segment QP decided in feedback-linearized
/// coordinates, where both rows act on `u*` with normals
/// `w1 = 2(p - p0)ᵀA` and `w2 = p̃ᵀP2 + vᵀP3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCheck {
    pub feasible: bool,
    /// Signed feasibility margin; negative when the rows conflict.
    pub margin: f64,
    /// A feasible `u*` when one exists.
    pub witness: Option<DVector<f64>>,
    /// `π - angle(w1, w2)`, infinite when either normal vanishes.
    pub antiparallel_gap: f64,
}

pub fn reduced_feasibility(
    e: &Ellipsoid,
    gains: &BarrierGains,
    clf: &ClfParams,
    goal: &DVector<f64>,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<ReducedCheck> {
    let a = e.shape();
    let d = p - e.center();
    let h = e.h_value(p)?;
    let dav = linalg::bilinear(&d, a, v);
    let hp = -2.0 * dav + gains.alpha(h);
    let w1 = a * &d * 2.0;
    let b1 = -2.0 * linalg::bilinear(v, a, v) - 2.0 * gains.alpha_derivative(h) * dav + gains.alpha_outer(hp);

    let p_err = goal - p;
    let w2 = clf.p2().tr_mul(&p_err) + clf.p3() * v;
    let b2 = linalg::bilinear(v, clf.p2(), v) + linalg::bilinear(&p_err, clf.p1(), v)
        - clf.gamma() * clf_value(clf, &p_err, v)?;

    Ok(halfspace_pair(&w1, b1, &w2, b2))
}

fn halfspace_pair(w1: &DVector<f64>, b1: f64, w2: &DVector<f64>, b2: f64) -> ReducedCheck {
    let n = w1.len();
    let (r1, r2) = (w1.norm(), w2.norm());
    let single = |w: &DVector<f64>, b: f64, r: f64| -> DVector<f64> {
        if b >= 0.0 {
            DVector::zeros(n)
        } else {
            w * (b / (r * r))
        }
    };
    let infeasible = |margin: f64, gap: f64| ReducedCheck {
        feasible: false,
        margin,
        witness: None,
        antiparallel_gap: gap,
    };
    if r1 == 0.0 && b1 < 0.0 {
        return infeasible(b1, f64::INFINITY);
    }
    if r2 == 0.0 && b2 < 0.0 {
        return infeasible(b2, f64::INFINITY);
    }
    if r1 == 0.0 || r2 == 0.0 {
        let witness = if r1 == 0.0 && r2 == 0.0 {
            DVector::zeros(n)
        } else if r1 == 0.0 {
            single(w2, b2, r2)
        } else {
            single(w1, b1, r1)
        };
        return ReducedCheck {
            feasible: true,
            margin: f64::INFINITY,
            witness: Some(witness),
            antiparallel_gap: f64::INFINITY,
        };
    }
    let cos = (w1.dot(w2) / (r1 * r2)).clamp(-1.0, 1.0);
    let gap = PI - cos.acos();
    if cos < 0.0 && 1.0 + cos < 1e-12 {
        // Antiparallel: w1·u ≤ b1 and w1·u ≥ -b2 r1 / r2.
        let margin = b1 / r1 + b2 / r2;
        if margin < 0.0 {
            return infeasible(margin, gap);
        }
        return ReducedCheck {
            feasible: true,
            margin,
            witness: Some(w1 * (b1 / (r1 * r1))),
            antiparallel_gap: gap,
        };
    }
    let witness = if 1.0 - cos < 1e-12 {
        // Same direction: the tighter row dominates.
        if b1 / r1 <= b2 / r2 {
            single(w1, b1, r1)
        } else {
            single(w2, b2, r2)
        }
    } else {
        // Vertex where both rows hold with equality.
        let gram = nalgebra::Matrix2::new(r1 * r1, w1.dot(w2), w1.dot(w2), r2 * r2);
        let mu = gram
            .lu()
            .solve(&nalgebra::Vector2::new(b1, b2))
            .unwrap_or_else(nalgebra::Vector2::zeros);
        w1 * mu[0] + w2 * mu[1]
    };
    ReducedCheck {
        feasible: true,
        margin: f64::INFINITY,
        witness: Some(witness),
        antiparallel_gap: gap,
    }
}

/// How an audited state was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Uniform over the safe set and CLF sublevel set.
    Uniform,
    /// Constructed with antiparallel constraint normals.
    Manifold,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditFinding {
    pub kind: SampleKind,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub margin: f64,
    pub antiparallel_gap: f64,
    /// True when the feedback-linearized check also finds no feasible input.
    pub confirmed: bool,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentAudit {
    pub segment: usize,
    /// `c` in the sublevel set `V(x_{i+1} - p, v) ≤ c`.
    pub level: f64,
    pub uniform_samples: usize,
    pub manifold_samples: usize,
    pub infeasible: usize,
    pub ill_conditioned: usize,
    /// Infeasible outcomes the reduced check agrees with.
    pub confirmed: usize,
    /// Smallest angle between the lines spanned by `w1` and `w2`, radians.
    pub min_normal_angle: f64,
    /// Smallest distance of `angle(w1, w2)` from `π`, radians.
    pub min_antiparallel_gap: f64,
    pub worst: Vec<AuditFinding>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub samples_per_segment: usize,
    pub seed: u64,
    pub gamma: f64,
    pub gamma_bound: Option<f64>,
    pub segments: Vec<SegmentAudit>,
}

impl AuditReport {
    pub fn infeasible(&self) -> usize {
        self.segments.iter().map(|s| s.infeasible).sum()
    }

    pub fn ill_conditioned(&self) -> usize {
        self.segments.iter().map(|s| s.ill_conditioned).sum()
    }

    pub fn passed(&self) -> bool {
        self.infeasible() == 0 && self.ill_conditioned() == 0
    }
}

const WORST_KEPT: usize = 5;
const MAX_ATTEMPTS_PER_SAMPLE: usize = 1000;

/// Samples states per segment and attempts the segment QP on each.
///
/// Two populations are drawn, `samples` each: states uniform over
/// `p ∈ C_i`, `h'_i(p, v) ≥ 0`, `V(x_{i+1} - p, v) ≤ V(x_{i+1} - x_i, 0)`;
/// and states from the same region constructed so that the CBF and CLF
/// normals are antiparallel, where infeasibility can actually occur.
/// The QP is solved without gamma backoff.
pub fn audit_feasibility<M: DynamicsModel + ?Sized>(
    params: &ControllerParams,
    plan: &PathPlan,
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Input("audit needs at least one sample".into()));
    }
    let clf = params.clf();
    let diag = validate_clf_params(clf);
    let n = plan.dim();
    let p_inv = clf
        .block()
        .try_inverse()
        .ok_or_else(|| Error::Validation(diag.report.clone()))?;
    let p3_inv = clf
        .p3()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::param("P3", "singular"))?;

    let mut segments = Vec::with_capacity(plan.segments());
    for i in 0..plan.segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let e = plan.ellipsoid(i);
        let goal = plan.waypoint(i + 1);
        let start = plan.waypoint(i);
        let level = clf_value(clf, &(goal - start), &DVector::zeros(n))?;
        let vmax: Vec<f64> = (0..n)
            .map(|j| (2.0 * level * p_inv[(n + j, n + j)]).max(0.0).sqrt())
            .collect();
        let factor = e.shape().clone().cholesky().expect("shape is SPD by construction");
        let s = SupervisorState {
            segment: i,
            finished: false,
        };

        let in_region = |p: &DVector<f64>, v: &DVector<f64>| -> bool {
            let hp = h_prime(e, params.barrier(), p, v).unwrap_or(f64::NEG_INFINITY);
            let vl = clf_value(clf, &(goal - p), v).unwrap_or(f64::INFINITY);
            hp >= 0.0 && vl <= level
        };

        let mut audit = SegmentAudit {
            segment: i,
            level,
            uniform_samples: 0,
            manifold_samples: 0,
            infeasible: 0,
            ill_conditioned: 0,
            confirmed: 0,
            min_normal_angle: f64::INFINITY,
            min_antiparallel_gap: f64::INFINITY,
            worst: vec![],
        };

        for kind in [SampleKind::Uniform, SampleKind::Manifold] {
            let mut drawn = 0;
            let mut attempts = 0;
            while drawn < samples && attempts < samples * MAX_ATTEMPTS_PER_SAMPLE {
                attempts += 1;
                let p = sample_in_ellipsoid(&mut rng, e, &factor);
                let v = match kind {
                    SampleKind::Uniform => {
                        DVector::from_iterator(n, vmax.iter().map(|&m| m * (2.0 * rng.random::<f64>() - 1.0)))
                    }
                    SampleKind::Manifold => {
                        let w1 = e.shape() * (&p - e.center()) * 2.0;
                        if w1.norm() < 1e-9 {
                            continue;
                        }
                        let scale = 10f64.powf(6.0 * rng.random::<f64>() - 3.0);
                        let p_err = goal - &p;
                        &p3_inv * (-(w1 * scale) - clf.p2().tr_mul(&p_err))
                    }
                };
                if !in_region(&p, &v) {
                    continue;
                }
                drawn += 1;
                audit_state(params, plan, model, s, kind, &p, &v, &mut audit)?;
            }
            match kind {
                SampleKind::Uniform => audit.uniform_samples = drawn,
                SampleKind::Manifold => audit.manifold_samples = drawn,
            }
        }
        segments.push(audit);
    }
    Ok(AuditReport {
        samples_per_segment: samples,
        seed,
        gamma: clf.gamma(),
        gamma_bound: diag.gamma_bound,
        segments,
    })
}

#[allow(clippy::too_many_arguments)]
fn audit_state<M: DynamicsModel + ?Sized>(
    params: &ControllerParams,
    plan: &PathPlan,
    model: &M,
    s: SupervisorState,
    kind: SampleKind,
    p: &DVector<f64>,
    v: &DVector<f64>,
    audit: &mut SegmentAudit,
) -> Result<()> {
    let e = plan.ellipsoid(s.segment);
    let goal = plan.waypoint(s.segment + 1);
    let reduced = reduced_feasibility(e, params.barrier(), params.clf(), goal, p, v)?;
    if kind == SampleKind::Uniform && reduced.antiparallel_gap.is_finite() {
        let theta = PI - reduced.antiparallel_gap;
        audit.min_normal_angle = audit.min_normal_angle.min(theta.min(PI - theta));
        audit.min_antiparallel_gap = audit.min_antiparallel_gap.min(reduced.antiparallel_gap);
    }
    let outcome = control(&params.clone().with_gamma_backoff(false), plan, model, s, p, v);
    let err = match outcome {
        Ok(_) => return Ok(()),
        Err(e @ Error::Infeasible(_)) => {
            audit.infeasible += 1;
            e
        }
        Err(e @ Error::IllConditioned(_)) => {
            audit.ill_conditioned += 1;
            e
        }
        Err(other) => return Err(other),
    };
    // A reduced-coordinate witness that satisfies the real rows means the
    // failure is numerical, not a genuine conflict.
    let confirmed = match &reduced.witness {
        None => true,
        Some(u_star) => {
            let u = feedback_linearized_input(model, p, v, u_star)?;
            let rows = [
                clf_constraint(params.clf(), model, goal, p, v)?,
                cbf_constraint(e, params.barrier(), model, p, v)?,
            ];
            !rows.iter().all(|r| r.residual(&u) <= 1e-9 * r.offset.abs().max(1.0))
        }
    };
    if confirmed && matches!(err, Error::Infeasible(_)) {
        audit.confirmed += 1;
    }
    audit.worst.push(AuditFinding {
        kind,
        p: p.iter().copied().collect(),
        v: v.iter().copied().collect(),
        margin: reduced.margin,
        antiparallel_gap: reduced.antiparallel_gap,
        confirmed,
        error: err.to_string(),
    });
    audit.worst.sort_by(|a, b| a.margin.total_cmp(&b.margin));
    audit.worst.truncate(WORST_KEPT);
    Ok(())
}

/// Uniform point in `{p : (p - p0)ᵀ A (p - p0) ≤ 1}`.
fn sample_in_ellipsoid(
    rng: &mut ChaCha8Rng,
    e: &Ellipsoid,
    factor: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> DVector<f64> {
    let n = e.dim();
    let mut y = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let norm = y.norm();
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    y *= radius / norm.max(f64::MIN_POSITIVE);
    // A = L Lᵀ, so p - p0 = L⁻ᵀ y has |Lᵀ(p - p0)| = |y| ≤ 1.
    let l = factor.l();
    let offset = l
        .transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor is nonsingular");
    e.center() + offset
}
