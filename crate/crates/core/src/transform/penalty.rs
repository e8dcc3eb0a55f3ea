//! Reference solutions of the soft-constrained problem with the dense
//! interior point solver, and the check that `sigma1` is an exact penalty.

use serde::Serialize;

use super::condense::condensed_cost;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{MpcProblem, Reference};
use crate::qp::{self, DenseQp, IpmSettings};

/// Which problem the oracle solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Soft constraints with slacks penalized by `sigma1, sigma2`.
    Penalty,
    /// Soft constraints enforced as hard constraints, no slacks.
    Hard,
    /// Minimal total slack; feasibility test for `Hard`.
    Phase1,
}

const PHASE1_REG: f64 = 1e-9;
/// Total slack below which the hard problem counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;
const ZERO_ROW: f64 = 1e-14;

/// Dense QP over `(u_0, .., u_{N-1}, d_0, .., d_N)` with the states
/// eliminated. In `Hard` mode there are no slacks.
#[derive(Debug, Clone)]
pub struct OracleQp {
    pub qp: DenseQp,
    pub mode: OracleMode,
    pub n_u: usize,
    pub n_delta: usize,
    /// Rows of `G` that belong to soft constraints (`Hard` mode).
    pub soft_rows: Vec<usize>,
}

struct Rows {
    g: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Rows {
    fn push(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        self.g.push(row);
        self.rhs.push(rhs);
        self.rhs.len() - 1
    }
}

pub fn oracle_qp(p: &MpcProblem, x: &[f64], r: &Reference, mode: OracleMode) -> Result<OracleQp> {
    let (nx, nu, ns, n_h) = (p.nx(), p.nu(), p.n_soft(), p.horizon);
    if x.len() != nx || r.x.len() != nx || r.u.len() != nu {
        return Err(Error::Dimension("state or reference length".into()));
    }
    let c = condensed_cost(p);
    let n_u = n_h * nu;
    let n_delta = if mode == OracleMode::Hard { 0 } else { (n_h + 1) * ns };
    let n = n_u + n_delta;
    let w = &p.weights;

    let mut h = Mat::zeros(n, n);
    let mut f = Vector::zeros(n);
    match mode {
        OracleMode::Phase1 => {
            h.fill_diagonal(PHASE1_REG);
            f.rows_mut(n_u, n_delta).fill(1.0);
        }
        _ => {
            h.view_mut((0, 0), (n_u, n_u)).copy_from(&c.h);
            let param: Vec<f64> = x.iter().chain(&r.x).chain(&r.u).copied().collect();
            let mut ext = Mat::zeros(n_u, 2 * nx + nu);
            ext.view_mut((0, 0), (n_u, nx)).copy_from(&c.phi);
            ext.view_mut((0, nx), (n_u, nx + nu)).copy_from(&c.phi_ref);
            f.rows_mut(0, n_u).copy_from(&(ext * Vector::from_vec(param)));
            for i in n_u..n {
                h[(i, i)] = 2.0 * w.sigma2;
                f[i] = w.sigma1;
            }
        }
    }

    let mut rows = Rows { g: Vec::new(), rhs: Vec::new() };
    for k in 0..n_h {
        for j in 0..nu {
            let mut row = vec![0.0; n];
            row[k * nu + j] = 1.0;
            rows.push(row.clone(), p.constraints.u_max[j]);
            row[k * nu + j] = -1.0;
            rows.push(row, -p.constraints.u_min[j]);
        }
    }
    let xvec = Vector::from_column_slice(x);
    let mut soft_rows = Vec::new();
    for k in 0..=n_h {
        let free = c.omega.rows(k * nx, nx) * &xvec;
        let gam = c.gamma.rows(k * nx, nx);
        // a x_k[i] <= rhs  with  x_k = free + gam u  (plus -d for soft rows)
        let add = |i: usize, a: f64, bound: f64, slack: Option<usize>, rows: &mut Rows| -> Result<Option<usize>> {
            let mut row = vec![0.0; n];
            for col in 0..n_u {
                row[col] = a * gam[(i, col)];
            }
            let rhs = bound - a * free[i];
            let zero = row.iter().all(|v| v.abs() <= ZERO_ROW);
            match slack {
                Some(d) if n_delta > 0 => row[n_u + d] = -1.0,
                _ if zero => {
                    return if rhs >= -1e-12 {
                        Ok(None)
                    } else {
                        Err(Error::OracleFailure(format!("constraint on x_{k}[{i}] cannot be met")))
                    };
                }
                _ => {}
            }
            Ok(Some(rows.push(row, rhs)))
        };
        if k > 0 {
            for hb in &p.constraints.hard {
                add(hb.index, 1.0, hb.max, None, &mut rows)?;
                add(hb.index, -1.0, -hb.min, None, &mut rows)?;
            }
        }
        for (j, sb) in p.constraints.soft.iter().enumerate() {
            let d = k * ns + j;
            if let Some(row) = add(sb.index, 1.0, sb.center + sb.radius, Some(d), &mut rows)? {
                soft_rows.push(row);
            }
            if let Some(row) = add(sb.index, -1.0, sb.radius - sb.center, Some(d), &mut rows)? {
                soft_rows.push(row);
            }
        }
    }
    for d in 0..n_delta {
        let mut row = vec![0.0; n];
        row[n_u + d] = -1.0;
        rows.push(row, 0.0);
    }
    let m = rows.rhs.len();
    let mut g = Mat::zeros(m, n);
    for (i, row) in rows.g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            g[(i, j)] = *v;
        }
    }
    Ok(OracleQp {
        qp: DenseQp::new(h, f, g, Vector::from_vec(rows.rhs)),
        mode,
        n_u,
        n_delta,
        soft_rows,
    })
}

/// Oracle solution in original coordinates.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub u: Vec<f64>,
    /// Slacks `(d_0, .., d_N)`, empty in `Hard` mode.
    pub delta: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the soft-constraint rows (`Hard` mode).
    pub soft_multipliers: Vec<f64>,
}

pub fn solve_mpc(p: &MpcProblem, x: &[f64], r: &Reference, mode: OracleMode) -> Result<OracleSolution> {
    let o = oracle_qp(p, x, r, mode)?;
    let sol = qp::solve(&o.qp, &IpmSettings::default())?;
    Ok(OracleSolution {
        u: sol.z.rows(0, o.n_u).iter().copied().collect(),
        delta: sol.z.rows(o.n_u, o.n_delta).iter().copied().collect(),
        objective: sol.objective,
        soft_multipliers: o.soft_rows.iter().map(|&i| sol.ineq_dual[i]).collect(),
    })
}

/// Whether the soft constraints can all be met at state `x`.
pub fn hard_feasible(p: &MpcProblem, x: &[f64], r: &Reference) -> Result<bool> {
    if p.n_soft() == 0 {
        return Ok(true);
    }
    let s = solve_mpc(p, x, r, OracleMode::Phase1)?;
    Ok(s.delta.iter().sum::<f64>() <= FEASIBILITY_TOL)
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltyReport {
    pub sigma1: f64,
    /// Largest soft-constraint multiplier of the hard problem at each
    /// sample; `None` where the hard problem is infeasible.
    pub per_sample: Vec<Option<f64>>,
    pub infeasible: usize,
    pub max_multiplier: f64,
    /// `sigma1 > max_multiplier`.
    pub exact: bool,
}

/// Solves the hard-constrained problem at every sample and compares its
/// largest soft-constraint multiplier with `sigma1`.
pub fn exact_penalty_check(p: &MpcProblem, samples: &[(Vec<f64>, Reference)]) -> Result<PenaltyReport> {
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut infeasible = 0;
    let mut max_multiplier: f64 = 0.0;
    for (x, r) in samples {
        if !hard_feasible(p, x, r)? {
            infeasible += 1;
            per_sample.push(None);
            continue;
        }
        let s = solve_mpc(p, x, r, OracleMode::Hard)?;
        let m = s.soft_multipliers.iter().fold(0.0_f64, |a, v| a.max(*v));
        max_multiplier = max_multiplier.max(m);
        per_sample.push(Some(m));
    }
    Ok(PenaltyReport {
        sigma1: p.weights.sigma1,
        per_sample,
        infeasible,
        max_multiplier,
        exact: p.weights.sigma1 > max_multiplier,
    })
}
