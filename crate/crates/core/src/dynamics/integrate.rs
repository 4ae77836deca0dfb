use nalgebra::DVector;

use super::DynamicsModel;
use crate::error::{Error, Result};

/// One classical Runge-Kutta step of `ṗ = v, v̇ = f + g u(p, v)`.
///
/// The controller is evaluated at each of the four stage states. A failed
/// evaluation aborts the step and carries the stage time and state.
pub fn rk4_step<M, C>(
    model: &M,
    controller: &mut C,
    t: f64,
    p: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)>
where
    M: DynamicsModel + ?Sized,
    C: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    let mut accel = |ts: f64, ps: &DVector<f64>, vs: &DVector<f64>| -> Result<DVector<f64>> {
        let u = controller(ps, vs).map_err(|e| e.at_state(ts, ps, vs))?;
        Ok(model.acceleration(ps, vs, &u))
    };
    let half = 0.5 * dt;

    let k1p = v.clone();
    let k1v = accel(t, p, v)?;

    let p2 = p + &k1p * half;
    let v2 = v + &k1v * half;
    let k2v = accel(t + half, &p2, &v2)?;
    let k2p = v2;

    let p3 = p + &k2p * half;
    let v3 = v + &k2v * half;
    let k3v = accel(t + half, &p3, &v3)?;
    let k3p = v3;

    let p4 = p + &k3p * dt;
    let v4 = v + &k3v * dt;
    let k4v = accel(t + dt, &p4, &v4)?;
    let k4p = v4;

    let sixth = dt / 6.0;
    let p_next = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * sixth;
    let v_next = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * sixth;
    Ok((p_next, v_next))
}

/// Observed convergence order of an integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceOrder {
    Estimated(f64),
    /// Endpoint differences are at rounding level: the integrator reproduces
    /// the exact solution.
    Exact,
}

/// Richardson estimate of the integration order over `[0, t_end]`.
///
/// Each step size must divide `t_end`. Successive endpoint differences
/// `e_k = |x(dt_k) - x(dt_{k+1})|` give estimates
/// `log(e_k / e_{k+1}) / log(dt_k / dt_{k+1})`; the median is returned.
pub fn richardson_order<M, C>(
    model: &M,
    mut controller: C,
    p0: &DVector<f64>,
    v0: &DVector<f64>,
    t_end: f64,
    dts: &[f64],
) -> Result<ConvergenceOrder>
where
    M: DynamicsModel + ?Sized,
    C: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    if dts.len() < 3 {
        return Err(Error::Input(format!(
            "Richardson estimate needs at least 3 step sizes, got {}",
            dts.len()
        )));
    }
    let mut endpoints = Vec::with_capacity(dts.len());
    for &dt in dts {
        if !(dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let steps = (t_end / dt).round();
        if steps < 1.0 || ((steps * dt - t_end).abs() > 1e-9 * t_end.max(1.0)) {
            return Err(Error::Input(format!("step {dt} does not divide t_end = {t_end}")));
        }
        let (mut p, mut v) = (p0.clone(), v0.clone());
        for k in 0..steps as usize {
            (p, v) = rk4_step(model, &mut controller, k as f64 * dt, &p, &v, dt)?;
        }
        let mut x = p.as_slice().to_vec();
        x.extend_from_slice(v.as_slice());
        endpoints.push(DVector::from_vec(x));
    }
    let scale = endpoints.iter().map(|x| x.amax()).fold(1.0, f64::max);
    let floor = 1e3 * f64::EPSILON * scale;
    let diffs: Vec<f64> = endpoints.windows(2).map(|w| (&w[0] - &w[1]).norm()).collect();
    let mut estimates: Vec<f64> = diffs
        .windows(2)
        .zip(dts.windows(3))
        .filter(|(e, _)| e[0] > floor && e[1] > floor)
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[1] / h[2]).ln())
        .collect();
    if estimates.is_empty() {
        return Ok(ConvergenceOrder::Exact);
    }
    estimates.sort_by(f64::total_cmp);
    let mid = estimates.len() / 2;
    let median = if estimates.len() % 2 == 1 {
        estimates[mid]
    } else {
        0.5 * (estimates[mid - 1] + estimates[mid])
    };
    Ok(ConvergenceOrder::Estimated(median))
}
