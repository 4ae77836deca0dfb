use serde::Serialize;

use super::Scenario;
use crate::cbf::h_prime;
use crate::dynamics::{Outcome, SimRun};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub segment: usize,
    pub records: usize,
    pub min_h: f64,
    pub min_h_prime: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub outcome: String,
    /// Details of a failed outcome, e.g. the state where the QP failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<serde_json::Value>,
    pub final_time: f64,
    pub final_position_error: f64,
    pub final_speed: f64,
    pub final_position: Vec<f64>,
    pub final_velocity: Vec<f64>,
    pub final_segment: usize,
    pub segments: Vec<SegmentSummary>,
    pub switch_times: Vec<f64>,
    pub total_steps: usize,
    pub dt: f64,
    pub wall_time_s: f64,
    /// Largest observed `|Δu| / dt` away from switches.
    pub lipschitz_estimate: f64,
    /// Records whose input needed gamma backoff.
    pub backoff_records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Condenses a finished run. Minimum barrier values cover every record of a
/// segment plus the switch record that leaves it.
pub fn write_summary(run: &SimRun, scenario: &Scenario, seed: Option<u64>) -> Result<Summary> {
    let log = &run.log;
    let last = log.last().ok_or_else(|| Error::Input("no records".into()))?;
    let plan = &scenario.plan;
    let mut segments: Vec<SegmentSummary> = (0..plan.segments())
        .map(|segment| SegmentSummary {
            segment,
            records: 0,
            min_h: f64::INFINITY,
            min_h_prime: f64::INFINITY,
        })
        .collect();
    for r in &log.records {
        let seg = &mut segments[r.segment];
        seg.records += 1;
        seg.min_h = seg.min_h.min(r.h);
        seg.min_h_prime = seg.min_h_prime.min(r.h_prime);
        if r.switched {
            let e = plan.ellipsoid(r.segment - 1);
            let prev = &mut segments[r.segment - 1];
            prev.min_h = prev.min_h.min(e.h_value(&r.p)?);
            prev.min_h_prime = prev
                .min_h_prime
                .min(h_prime(e, scenario.controller.barrier(), &r.p, &r.v)?);
        }
    }
    segments.retain(|s| s.min_h.is_finite());

    let failure = match &run.outcome {
        Outcome::Reached | Outcome::Timeout => None,
        Outcome::InfeasibleAt { t, p, v, reason } => Some(serde_json::json!({
            "t": t, "p": p, "v": v, "reason": reason,
        })),
        Outcome::SafetyViolation { t, segment, h, h_prime } => Some(serde_json::json!({
            "t": t, "segment": segment, "h": h, "h_prime": h_prime,
        })),
    };
    let dt = if log.len() > 1 {
        log.records[1].t - log.records[0].t
    } else {
        scenario.sim.dt
    };

    Ok(Summary {
        scenario: scenario.name.clone(),
        outcome: run.outcome.label().to_string(),
        failure,
        final_time: last.t,
        final_position_error: (&last.p - plan.goal()).norm(),
        final_speed: last.v.norm(),
        final_position: last.p.iter().copied().collect(),
        final_velocity: last.v.iter().copied().collect(),
        final_segment: last.segment,
        segments,
        switch_times: log.switches().map(|(t, _)| t).collect(),
        total_steps: log.len() - 1,
        dt,
        wall_time_s: run.wall_time.as_secs_f64(),
        lipschitz_estimate: log.lipschitz_estimate(),
        backoff_records: log.records.iter().filter(|r| r.backoffs > 0).count(),
        seed,
    })
}
