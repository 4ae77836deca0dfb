//! Plant models, the fixed-step RK4 integrator and the closed-loop simulator.

mod integrate;
mod log;
mod model;
mod sim;

pub use integrate::{richardson_order, rk4_step, ConvergenceOrder};
pub use log::{Record, TrajectoryLog};
pub use model::*;
pub use sim::{simulate, Outcome, SimConfig, SimRun, DEFAULT_DT, SAFETY_TOL};
