//! Dense reference QP solver used for closed-loop baselines and multiplier
//! extraction:
//!
//! ```text
//! min 1/2 z'Hz + f'z   s.t.  A z = b,  G z <= g
//! ```
//!
//! Mehrotra predictor-corrector interior point, followed by an active-set
//! polish that re-solves the equality-constrained KKT system on the
//! identified active set.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone)]
pub struct DenseQp {
    pub h: Mat,
    pub f: Vector,
    pub a: Mat,
    pub b: Vector,
    pub g: Mat,
    pub g_rhs: Vector,
}

impl DenseQp {
    /// An inequality-only problem.
    pub fn new(h: Mat, f: Vector, g: Mat, g_rhs: Vector) -> Self {
        let n = h.nrows();
        DenseQp {
            h,
            f,
            a: Mat::zeros(0, n),
            b: Vector::zeros(0),
            g,
            g_rhs,
        }
    }

    pub fn with_equalities(mut self, a: Mat, b: Vector) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        let ok = self.h.ncols() == n
            && self.f.len() == n
            && self.a.ncols() == n
            && self.a.nrows() == self.b.len()
            && self.g.ncols() == n
            && self.g.nrows() == self.g_rhs.len();
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("inconsistent QP data".into()))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-10,
            max_iter: 100,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vector,
    /// Multipliers of `A z = b`.
    pub eq_dual: Vector,
    /// Multipliers of `G z <= g`, nonnegative.
    pub ineq_dual: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Kkt {
    factor: Factor,
    n: usize,
    m_eq: usize,
}

impl Kkt {
    fn new(m: Mat, a: &Mat) -> Result<Self> {
        let n = m.nrows();
        let m_eq = a.nrows();
        if m_eq == 0 {
            if let Some(c) = Cholesky::new(m.clone()) {
                return Ok(Kkt {
                    factor: Factor::Chol(c),
                    n,
                    m_eq,
                });
            }
        }
        let mut k = Mat::zeros(n + m_eq, n + m_eq);
        k.view_mut((0, 0), (n, n)).copy_from(&m);
        k.view_mut((n, 0), (m_eq, n)).copy_from(a);
        k.view_mut((0, n), (n, m_eq)).copy_from(&a.transpose());
        let lu = k.lu();
        if !lu.is_invertible() {
            return Err(Error::OracleFailure("singular KKT system".into()));
        }
        Ok(Kkt {
            factor: Factor::Lu(lu),
            n,
            m_eq,
        })
    }

    fn solve(&self, rz: &Vector, ry: &Vector) -> Result<(Vector, Vector)> {
        match &self.factor {
            Factor::Chol(c) => Ok((c.solve(rz), Vector::zeros(0))),
            Factor::Lu(lu) => {
                let mut rhs = Vector::zeros(self.n + self.m_eq);
                rhs.rows_mut(0, self.n).copy_from(rz);
                rhs.rows_mut(self.n, self.m_eq).copy_from(ry);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::OracleFailure("KKT solve failed".into()))?;
                Ok((sol.rows(0, self.n).into_owned(), sol.rows(self.n, self.m_eq).into_owned()))
            }
        }
    }
}

fn max_step(v: &Vector, dv: &Vector) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

pub fn solve(qp: &DenseQp, settings: &IpmSettings) -> Result<QpSolution> {
    qp.check()?;
    let n = qp.n();
    let (m_eq, m_in) = (qp.a.nrows(), qp.g.nrows());
    let (h, f, a, b, g, gr) = (&qp.h, &qp.f, &qp.a, &qp.b, &qp.g, &qp.g_rhs);
    let scale = 1.0 + f.amax().max(gr.amax()).max(b.amax()).max(h.amax());

    let mut z = Vector::zeros(n);
    let mut y = Vector::zeros(m_eq);
    let mut s = Vector::from_element(m_in, 1.0);
    let mut lam = Vector::from_element(m_in, 1.0);
    if m_in > 0 {
        // Least-squares start, shifted into the interior.
        let kkt = Kkt::new(h + g.transpose() * g, a)?;
        let (z0, y0) = kkt.solve(&(-f + g.transpose() * (gr - &s)), b)?;
        let s0 = gr - g * &z0;
        let shift = 1.0f64.max(-1.5 * s0.min());
        z = z0;
        y = y0;
        s = s0.map(|v| v.max(shift));
    }
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..settings.max_iter {
        iterations = it + 1;
        let r_d = h * &z + f + a.transpose() * &y + g.transpose() * &lam;
        let r_p = a * &z - b;
        let r_g = g * &z + &s - gr;
        let mu = if m_in > 0 { s.dot(&lam) / m_in as f64 } else { 0.0 };
        let res = r_d.amax().max(r_p.amax()).max(r_g.amax());
        if res <= settings.tol * scale && mu <= settings.tol * scale {
            converged = true;
            break;
        }

        let w = lam.component_div(&s);
        let mut gw = g.clone();
        for (i, mut row) in gw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let m = h + g.transpose() * &gw;
        let kkt = Kkt::new(m, a)?;

        // The reduced system for a complementarity target rc (s.*lam = rc).
        let direction = |rc: &Vector| -> Result<(Vector, Vector, Vector, Vector)> {
            // lam .* ds + s .* dlam = -(s.*lam) + rc  and ds = -r_g - G dz
            let t = (lam.component_mul(&r_g) - lam.component_mul(&s) + rc).component_div(&s);
            let rz = -&r_d - g.transpose() * &t;
            let (dz, dy) = kkt.solve(&rz, &(-&r_p))?;
            let ds = -&r_g - g * &dz;
            let dlam = (rc - lam.component_mul(&s) - lam.component_mul(&ds)).component_div(&s);
            Ok((dz, dy, ds, dlam))
        };

        let zero = Vector::zeros(m_in);
        let (_, _, ds_a, dl_a) = direction(&zero)?;
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let mu_aff = if m_in > 0 {
            (&s + &ds_a * a_aff).dot(&(&lam + &dl_a * a_aff)) / m_in as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3) } else { 0.0 };
        let step = |d: &(Vector, Vector, Vector, Vector)| -> f64 {
            let mut alpha = (0.99 * max_step(&s, &d.2).min(max_step(&lam, &d.3))).min(1.0);
            // Stay in the wide neighbourhood s.*lam >= gamma mu.
            for _ in 0..if m_in > 0 { 60 } else { 0 } {
                let prod = (&s + &d.2 * alpha).component_mul(&(&lam + &d.3 * alpha));
                if prod.min() >= 1e-2 * prod.sum() / m_in as f64 {
                    break;
                }
                alpha *= 0.8;
            }
            alpha
        };
        let corrected = direction(&(Vector::from_element(m_in, sigma * mu) - ds_a.component_mul(&dl_a)))?;
        let mut alpha = step(&corrected);
        let (mut dz, mut dy, mut ds, mut dl) = corrected;
        if alpha < 0.5 {
            // The second-order term can make the corrector oscillate; fall
            // back to the plain centred direction when it steps further.
            let centred = direction(&Vector::from_element(m_in, sigma.max(0.1) * mu))?;
            let a2 = step(&centred);
            if a2 > alpha {
                alpha = a2;
                (dz, dy, ds, dl) = centred;
            }
        }
        z += &dz * alpha;
        y += &dy * alpha;
        s += &ds * alpha;
        lam += &dl * alpha;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::OracleFailure("interior point iterates diverged".into()));
        }
    }
    if !converged {
        return Err(Error::OracleFailure(format!(
            "no convergence in {} interior point iterations",
            settings.max_iter
        )));
    }

    let mut sol = QpSolution {
        objective: qp.objective(&z),
        z,
        eq_dual: y,
        ineq_dual: lam,
        iterations,
        polished: false,
    };
    if settings.polish {
        if let Some(p) = polish(qp, &sol, &s) {
            sol = p;
        }
    }
    Ok(sol)
}

/// Re-solves the KKT system with the constraints whose multiplier dominates
/// their slack treated as equalities. Returns `None` if the guess is not
/// primal and dual feasible.
fn polish(qp: &DenseQp, sol: &QpSolution, slack: &Vector) -> Option<QpSolution> {
    let n = qp.n();
    let active: Vec<usize> = (0..qp.g.nrows())
        .filter(|&i| sol.ineq_dual[i] > slack[i])
        .collect();
    let m_eq = qp.a.nrows();
    let m = m_eq + active.len();
    let mut k = Mat::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&qp.f));
    for i in 0..m_eq {
        let row = qp.a.row(i);
        k.view_mut((n + i, 0), (1, n)).copy_from(&row);
        k.view_mut((0, n + i), (n, 1)).copy_from(&row.transpose());
        rhs[n + i] = qp.b[i];
    }
    for (j, &i) in active.iter().enumerate() {
        let row = qp.g.row(i);
        k.view_mut((n + m_eq + j, 0), (1, n)).copy_from(&row);
        k.view_mut((0, n + m_eq + j), (n, 1)).copy_from(&row.transpose());
        rhs[n + m_eq + j] = qp.g_rhs[i];
    }
    let x = k.lu().solve(&rhs)?;
    let z = x.rows(0, n).into_owned();
    let tol = 1e-9 * (1.0 + qp.g_rhs.amax());
    let viol = (&qp.g * &z - &qp.g_rhs).max();
    if qp.g.nrows() > 0 && viol > tol {
        return None;
    }
    let mut ineq = Vector::zeros(qp.g.nrows());
    for (j, &i) in active.iter().enumerate() {
        let v = x[n + m_eq + j];
        if v < -tol {
            return None;
        }
        ineq[i] = v.max(0.0);
    }
    if !z.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(QpSolution {
        objective: qp.objective(&z),
        z,
        eq_dual: x.rows(n, m_eq).into_owned(),
        ineq_dual: ineq,
        iterations: sol.iterations,
        polished: true,
    })
}

/// Box-constrained convenience form `lo <= z <= hi` (infinite bounds are
/// dropped).
pub fn box_rows(lo: &[f64], hi: &[f64]) -> (Mat, Vector) {
    let n = lo.len();
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for i in 0..n {
        if hi[i].is_finite() {
            rows.push((i, 1.0, hi[i]));
        }
        if lo[i].is_finite() {
            rows.push((i, -1.0, -lo[i]));
        }
    }
    let mut g = DMatrix::zeros(rows.len(), n);
    let mut r = DVector::zeros(rows.len());
    for (k, &(i, sgn, v)) in rows.iter().enumerate() {
        g[(k, i)] = sgn;
        r[k] = v;
    }
    (g, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_and_box() {
        let h = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = Vector::from_vec(vec![-1.0, 1.0]);
        let (g, r) = box_rows(&[-0.1, -0.1], &[0.1, 0.1]);
        let sol = solve(&DenseQp::new(h.clone(), f.clone(), g, r), &IpmSettings::default()).unwrap();
        // unconstrained optimum is (6/7, -10/7); at (0.1, -0.1) the gradient
        // (-0.85, 0.95) points out of the box on both active faces
        assert!((sol.z[0] - 0.1).abs() < 1e-12);
        assert!((sol.z[1] + 0.1).abs() < 1e-12);
        assert!(sol.polished);

        let free = solve(
            &DenseQp::new(h.clone(), f.clone(), Mat::zeros(0, 2), Vector::zeros(0)),
            &IpmSettings::default(),
        )
        .unwrap();
        let exact = h.clone().lu().solve(&(-&f)).unwrap();
        assert!((free.z - exact).amax() < 1e-12);
    }

    #[test]
    fn equality_multiplier_sign() {
        // min 1/2 |z|^2 s.t. z1 + z2 = 1: z = (1/2, 1/2), H z + A'y = 0 gives y = -1/2
        let qp = DenseQp::new(Mat::identity(2, 2), Vector::zeros(2), Mat::zeros(0, 2), Vector::zeros(0))
            .with_equalities(Mat::from_row_slice(1, 2, &[1.0, 1.0]), Vector::from_vec(vec![1.0]));
        let sol = solve(&qp, &IpmSettings::default()).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-12);
        assert!((sol.eq_dual[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn inequality_multiplier_matches_kkt() {
        // min 1/2 z^2 - 2 z s.t. z <= 1: multiplier 1
        let qp = DenseQp::new(
            Mat::identity(1, 1),
            Vector::from_vec(vec![-2.0]),
            Mat::identity(1, 1),
            Vector::from_vec(vec![1.0]),
        );
        let sol = solve(&qp, &IpmSettings::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-12);
        assert!((sol.ineq_dual[0] - 1.0).abs() < 1e-12);
    }
}
