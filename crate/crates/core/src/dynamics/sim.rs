use std::time::{Duration, Instant};

use nalgebra::DVector;

use super::{rk4_step, DynamicsModel, Record, TrajectoryLog};
use crate::cbf::h_prime;
use crate::error::{Error, Result};
use crate::geometry::PathPlan;
use crate::hybrid::{control, step_supervisor, ControllerParams, SupervisorState};

pub const DEFAULT_DT: f64 = 1e-3;

/// Tolerance of the post-hoc safety check on `h` and `h'`.
pub const SAFETY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Hold `u` constant over each step instead of re-evaluating it per stage.
    pub zoh: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::param("t_max", format!("must be non-negative, got {t_max}")));
        }
        Ok(Self { dt, t_max, zoh: false })
    }

    pub fn with_zoh(mut self, zoh: bool) -> Self {
        self.zoh = zoh;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reached,
    Timeout,
    InfeasibleAt {
        t: f64,
        p: Vec<f64>,
        v: Vec<f64>,
        reason: String,
    },
    SafetyViolation {
        t: f64,
        segment: usize,
        h: f64,
        h_prime: f64,
    },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Timeout => "timeout",
            Outcome::InfeasibleAt { .. } => "infeasible",
            Outcome::SafetyViolation { .. } => "safety_violation",
        }
    }

    pub fn is_reached(&self) -> bool {
        matches!(self, Outcome::Reached)
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub log: TrajectoryLog,
    pub outcome: Outcome,
    pub wall_time: Duration,
}

/// Closed-loop run from `p = x_0`, `v = 0` until the supervisor finishes or
/// `t_max` elapses.
///
/// One record is written per step boundary, including `t = 0`. A switch is
/// flagged on the record of the step that produced it. Afterwards every
/// record is checked against `h ≥ -SAFETY_TOL` and `h' ≥ -SAFETY_TOL` for
/// its segment, and at switch records for the segment being left as well.
pub fn simulate<M: DynamicsModel + ?Sized>(
    plan: &PathPlan,
    model: &M,
    params: &ControllerParams,
    cfg: SimConfig,
) -> Result<SimRun> {
    let n = plan.dim();
    if model.dim() != n {
        return Err(Error::dim("dynamics model", n, model.dim()));
    }
    if params.dim() != n {
        return Err(Error::dim("controller", n, params.dim()));
    }
    let started = Instant::now();
    let steps = (cfg.t_max / cfg.dt + 1e-9).floor() as u64;

    let mut s = SupervisorState::default();
    let mut p = plan.waypoint(0).clone();
    let mut v = DVector::zeros(n);
    let mut log = TrajectoryLog::new(n);

    let record = |t: f64, s: SupervisorState, p: &DVector<f64>, v: &DVector<f64>, switched: bool| -> Result<Record> {
        let out = control(params, plan, model, s, p, v).map_err(|e| e.at_state(t, p, v))?;
        Ok(Record {
            t,
            p: p.clone(),
            v: v.clone(),
            u: out.u,
            segment: s.segment,
            h: out.diagnostics.h,
            h_prime: out.diagnostics.h_prime,
            lyapunov: out.diagnostics.lyapunov,
            active: out.diagnostics.active,
            switched,
            backoffs: out.diagnostics.backoffs,
        })
    };
    let infeasible = |e: Error| match e {
        Error::StepFailed { t, p, v, source } => Ok(Outcome::InfeasibleAt {
            t,
            p,
            v,
            reason: source.to_string(),
        }),
        Error::Infeasible(_) | Error::IllConditioned(_) => unreachable!("controller errors carry their state"),
        other => Err(other),
    };

    let mut outcome = match record(0.0, s, &p, &v, false) {
        Ok(r) => {
            log.records.push(r);
            None
        }
        Err(e) => Some(infeasible(e)?),
    };
    let mut k = 0u64;
    while outcome.is_none() {
        if s.finished {
            outcome = Some(Outcome::Reached);
            break;
        }
        if k >= steps {
            outcome = Some(Outcome::Timeout);
            break;
        }
        let t = k as f64 * cfg.dt;
        let held = log.records.last().expect("initial record exists").u.clone();
        let stepped = if cfg.zoh {
            rk4_step(
                model,
                &mut |_: &DVector<f64>, _: &DVector<f64>| Ok(held.clone()),
                t,
                &p,
                &v,
                cfg.dt,
            )
        } else {
            rk4_step(
                model,
                &mut |ps: &DVector<f64>, vs: &DVector<f64>| control(params, plan, model, s, ps, vs).map(|o| o.u),
                t,
                &p,
                &v,
                cfg.dt,
            )
        };
        match stepped {
            Ok((pn, vn)) => {
                p = pn;
                v = vn;
            }
            Err(e) => {
                outcome = Some(infeasible(e)?);
                break;
            }
        }
        k += 1;
        let t_next = k as f64 * cfg.dt;
        let next = step_supervisor(params, plan, s, &p, &v);
        let switched = next.segment != s.segment;
        s = next;
        match record(t_next, s, &p, &v, switched) {
            Ok(r) => log.records.push(r),
            Err(e) => outcome = Some(infeasible(e)?),
        }
    }

    let mut outcome = outcome.expect("loop exits with an outcome");
    if let Some(violation) = safety_violation(plan, params, &log) {
        outcome = violation;
    }
    Ok(SimRun {
        log,
        outcome,
        wall_time: started.elapsed(),
    })
}

fn safety_violation(plan: &PathPlan, params: &ControllerParams, log: &TrajectoryLog) -> Option<Outcome> {
    let bad = |h: f64, hp: f64| h < -SAFETY_TOL || hp < -SAFETY_TOL;
    for r in &log.records {
        if bad(r.h, r.h_prime) {
            return Some(Outcome::SafetyViolation {
                t: r.t,
                segment: r.segment,
                h: r.h,
                h_prime: r.h_prime,
            });
        }
        if r.switched {
            let prev = plan.ellipsoid(r.segment - 1);
            let h = prev.h_value(&r.p).expect("dims checked");
            let hp = h_prime(prev, params.barrier(), &r.p, &r.v).expect("dims checked");
            if bad(h, hp) {
                return Some(Outcome::SafetyViolation {
                    t: r.t,
                    segment: r.segment - 1,
                    h,
                    h_prime: hp,
                });
            }
        }
    }
    None
}
