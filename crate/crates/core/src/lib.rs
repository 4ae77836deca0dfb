//! Waypoint navigation through chains of ellipsoidal safe sets.
//!
//! Each segment runs a QP controller that combines a quadratic control
//! Lyapunov function toward the next waypoint with a second-order control
//! barrier function for the current ellipsoid. A supervisor hands over to
//! the next segment once the state is inside both neighbouring safe sets.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbf;
pub mod clf;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod hybrid;
pub mod linalg;
pub mod qp;
pub mod report;
pub mod scenario;

pub use cbf::{BarrierGains, HalfSpaceConstraint};
pub use clf::ClfParams;
pub use dynamics::{
    DampedCoupled2D, DoubleIntegrator, Dynamics, DynamicsModel, LinearModel, Outcome, SimConfig, TrajectoryLog,
};
pub use error::{Error, Result};
pub use geometry::{Ellipsoid, PathPlan};
pub use hybrid::{ControllerParams, SupervisorState};
pub use qp::{QpProblem, QpSolution};
pub use report::{Finding, ValidationReport};
pub use scenario::{parse_scenario, Scenario};
