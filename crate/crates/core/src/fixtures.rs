//! Bundled example scenarios.
//!
//! `office2d` is a planar floor plan with two wall blocks, driven by the
//! damped cross-coupled point mass. `walls3d` threads a double integrator
//! through gaps in two walls and over a box. Both layouts are inspired by
//! common navigation benchmarks rather than copied from any dataset.

use crate::scenario::{parse_scenario, Scenario};

pub const OFFICE_2D: &str = include_str!("../scenarios/office2d.json");
pub const WALLS_3D: &str = include_str!("../scenarios/walls3d.json");

/// All bundled fixtures by name.
pub const ALL: [(&str, &str); 2] = [("office2d", OFFICE_2D), ("walls3d", WALLS_3D)];

pub fn office2d() -> Scenario {
    parse_scenario(OFFICE_2D).expect("bundled office2d fixture is valid")
}

pub fn walls3d() -> Scenario {
    parse_scenario(WALLS_3D).expect("bundled walls3d fixture is valid")
}
