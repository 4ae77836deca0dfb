//! Exact solver for `min ½ uᵀHu` subject to at most two half-spaces.
//!
//! With two constraints there are four candidate active sets: ∅, {0}, {1}
//! and {0, 1}. Each is solved in closed form through the Gram matrix
//! `A H⁻¹ Aᵀ`; the first candidate that is primal feasible with
//! non-negative multipliers is the unique minimizer.

use nalgebra::{DMatrix, DVector};

use crate::cbf::HalfSpaceConstraint;
use crate::error::{Error, Result};
use crate::linalg;

/// Allowed constraint violation, scaled by `max(1, |offset|, |normal| |u|)`.
pub const PRIMAL_TOL: f64 = 1e-9;
/// Most negative multiplier still accepted as non-negative.
pub const DUAL_TOL: f64 = -1e-10;
/// Condition estimate above which a KKT system is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Chord `min |â0 ∓ â1|` between unit normals (≈ `|sin θ|` for small
/// angles) below which they are treated as parallel.
pub const PARALLEL_TOL: f64 = 1e-10;

pub const MAX_CONSTRAINTS: usize = 2;

#[derive(Debug, Clone)]
pub struct QpProblem {
    cost: DMatrix<f64>,
    cost_factor: DMatrix<f64>,
    constraints: Vec<HalfSpaceConstraint>,
}

impl QpProblem {
    pub fn new(cost: DMatrix<f64>, constraints: Vec<HalfSpaceConstraint>) -> Result<Self> {
        let cost_factor = linalg::require_spd(&cost, "QP cost H")?;
        let m = cost.nrows();
        if constraints.len() > MAX_CONSTRAINTS {
            return Err(Error::Input(format!(
                "QP accepts at most {MAX_CONSTRAINTS} constraints, got {}",
                constraints.len()
            )));
        }
        for c in &constraints {
            if c.dim() != m {
                return Err(Error::dim("constraint normal", m, c.dim()));
            }
        }
        Ok(Self {
            cost,
            cost_factor,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.cost.nrows()
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn constraints(&self) -> &[HalfSpaceConstraint] {
        &self.constraints
    }

    /// `½ uᵀHu`
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * linalg::bilinear(u, &self.cost, u)
    }

    /// `L⁻¹ x` where `H = L Lᵀ`.
    fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = &self.cost_factor;
        let mut y = x.clone();
        for i in 0..x.len() {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// `H⁻¹ x` through the stored Cholesky factor.
    fn cost_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = &self.cost_factor;
        let n = x.len();
        let mut y = self.whiten(x);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Squared ratio of extreme Cholesky pivots, a lower bound on cond(H).
    fn cost_condition(&self) -> f64 {
        let d = self.cost_factor.diagonal();
        let r = d.max() / d.min();
        r * r
    }
}

/// Minimizer plus its KKT certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// Indices into the problem's constraint list.
    pub active_set: Vec<usize>,
    /// One multiplier per entry of `active_set`.
    pub multipliers: Vec<f64>,
}

impl QpSolution {
    /// `|H u + Σ λ_k a_kᵀ|_∞`
    pub fn stationarity(&self, qp: &QpProblem) -> f64 {
        let mut r = qp.cost() * &self.u;
        for (&k, &lam) in self.active_set.iter().zip(&self.multipliers) {
            r += qp.constraints()[k].normal.transpose() * lam;
        }
        r.amax()
    }

    /// Largest constraint violation (0 when all hold).
    pub fn max_violation(&self, qp: &QpProblem) -> f64 {
        qp.constraints()
            .iter()
            .map(|c| c.residual(&self.u).max(0.0))
            .fold(0.0, f64::max)
    }
}

fn feasible(qp: &QpProblem, live: &[usize], u: &DVector<f64>) -> bool {
    live.iter().all(|&k| {
        let c = &qp.constraints[k];
        c.residual(u) <= PRIMAL_TOL * c.offset.abs().max(c.normal.norm() * u.norm()).max(1.0)
    })
}

pub fn solve(qp: &QpProblem) -> Result<QpSolution> {
    let m = qp.dim();
    let h_cond = qp.cost_condition();
    if h_cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned(h_cond));
    }

    let mut live = Vec::with_capacity(MAX_CONSTRAINTS);
    for (k, c) in qp.constraints.iter().enumerate() {
        if c.is_degenerate() {
            if c.offset < 0.0 {
                return Err(Error::Infeasible(format!(
                    "constraint {k} has zero normal and offset {:e} < 0",
                    c.offset
                )));
            }
        } else {
            live.push(k);
        }
    }

    let zero = DVector::zeros(m);
    if feasible(qp, &live, &zero) {
        return Ok(QpSolution {
            u: zero,
            active_set: vec![],
            multipliers: vec![],
        });
    }

    // y_k = H⁻¹ a_kᵀ and s_k = a_k H⁻¹ a_kᵀ for each live row.
    let ys: Vec<DVector<f64>> = live
        .iter()
        .map(|&k| qp.cost_solve(&qp.constraints[k].normal.transpose()))
        .collect();
    let ss: Vec<f64> = live
        .iter()
        .zip(&ys)
        .map(|(&k, y)| qp.constraints[k].normal.dot(&y.transpose()))
        .collect();

    for (j, &k) in live.iter().enumerate() {
        let mu = qp.constraints[k].offset / ss[j];
        let lambda = -mu;
        if lambda < DUAL_TOL {
            continue;
        }
        let u = &ys[j] * mu;
        if feasible(qp, &live, &u) {
            return Ok(QpSolution {
                u,
                active_set: vec![k],
                multipliers: vec![lambda.max(0.0)],
            });
        }
    }

    if live.len() < 2 {
        return Err(Error::Infeasible("no candidate active set is feasible".into()));
    }

    let (k0, k1) = (live[0], live[1]);
    // Unit normals in the H⁻¹ metric. The chord between them keeps full
    // relative accuracy at small angles, unlike 1 - cos².
    let z0 = qp.whiten(&qp.constraints[k0].normal.transpose()).normalize();
    let z1 = qp.whiten(&qp.constraints[k1].normal.transpose()).normalize();
    let chord = (&z0 - &z1).norm().min((&z0 + &z1).norm());
    if chord < PARALLEL_TOL {
        // Parallel normals: the single-row candidates were the only options.
        return Err(Error::Infeasible(format!(
            "parallel constraint normals (cos = {:.3}) with conflicting offsets",
            z0.dot(&z1)
        )));
    }

    let g01 = qp.constraints[k0].normal.dot(&ys[1].transpose());
    let gram = nalgebra::Matrix2::new(ss[0], g01, g01, ss[1]);
    // The row-normalized Gram matrix has eigenvalues 1 ± |cos θ|, and
    // 1 - |cos θ| = chord² / 2.
    let lo = 0.5 * chord * chord;
    let cond = h_cond * (2.0 - lo) / lo;
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned(cond));
    }
    let rhs = nalgebra::Vector2::new(qp.constraints[k0].offset, qp.constraints[k1].offset);
    let mu = gram.lu().solve(&rhs).ok_or(Error::IllConditioned(f64::INFINITY))?;
    let lambdas = [-mu[0], -mu[1]];
    let u = &ys[0] * mu[0] + &ys[1] * mu[1];
    if lambdas.iter().all(|&l| l >= DUAL_TOL) && feasible(qp, &live, &u) {
        return Ok(QpSolution {
            u,
            active_set: vec![k0, k1],
            multipliers: vec![lambdas[0].max(0.0), lambdas[1].max(0.0)],
        });
    }
    Err(Error::Infeasible("no candidate active set satisfies KKT".into()))
}
