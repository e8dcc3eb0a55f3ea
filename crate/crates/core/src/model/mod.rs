//! LTI plant, cost weights and constraint structure of the MPC problem.

mod json;

pub use json::{load_problem, parse_problem, ProblemDoc};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, expm, sym_eigenvalues, Mat};

/// Tolerance on minimum eigenvalues in the convexity checks.
pub const EIG_TOL: f64 = 1e-10;

/// Discrete-time plant `x+ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    a: Mat,
    b: Mat,
}

impl LtiModel {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B is {}x{} but A is {}x{}",
                b.nrows(),
                b.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(LtiModel { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(x);
        let u = nalgebra::DVector::from_column_slice(u);
        (&self.a * x + &self.b * u).as_slice().to_vec()
    }
}

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix `[[Ac, Bc], [0, 0]] * Ts`.
pub fn discretize_zoh(ac: &Mat, bc: &Mat, ts: f64) -> Result<LtiModel> {
    if !ac.is_square() || bc.nrows() != ac.nrows() {
        return Err(Error::Dimension(format!(
            "A_c is {}x{}, B_c is {}x{}",
            ac.nrows(),
            ac.ncols(),
            bc.nrows(),
            bc.ncols()
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::Parameter(format!("sampling time must be positive, got {ts}")));
    }
    let (nx, nu) = (ac.nrows(), bc.ncols());
    let mut m = Mat::zeros(nx + nu, nx + nu);
    m.view_mut((0, 0), (nx, nx)).copy_from(&(ac * ts));
    m.view_mut((0, nx), (nx, nu)).copy_from(&(bc * ts));
    let e = expm(&m)?;
    LtiModel::new(
        e.view((0, 0), (nx, nx)).into_owned(),
        e.view((0, nx), (nx, nu)).into_owned(),
    )
}

/// Stage weights `Q, R, S`, terminal weight `Q_N` and slack penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: Mat,
    pub r: Mat,
    pub s: Mat,
    pub qn: Mat,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl CostWeights {
    /// `Q = I`-style weights with `S = 0`, `Q_N = Q` and no slack penalty.
    pub fn new(q: Mat, r: Mat) -> Self {
        let s = Mat::zeros(q.nrows(), r.nrows());
        let qn = q.clone();
        CostWeights {
            q,
            r,
            s,
            qn,
            sigma1: 0.0,
            sigma2: 0.0,
        }
    }

    /// Stage cost `x'Qx + u'Ru + 2x'Su` (no 1/2 factor).
    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_column_slice(x);
        let u = nalgebra::DVector::from_column_slice(u);
        x.dot(&(&self.q * &x)) + u.dot(&(&self.r * &u)) + 2.0 * x.dot(&(&self.s * &u))
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_column_slice(x);
        x.dot(&(&self.qn * &x))
    }
}

/// Interval bound on a hard-constrained state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateBox {
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

/// Soft constraint `|x_i - center| <= radius + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SoftBound {
    pub index: usize,
    pub center: f64,
    pub radius: f64,
}

/// Input box plus the free / hard / soft partition of the state (0-based).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSpec {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub free: Vec<usize>,
    pub hard: Vec<StateBox>,
    pub soft: Vec<SoftBound>,
}

impl ConstraintSpec {
    /// Input box only; every state component is free.
    pub fn input_box(u_min: Vec<f64>, u_max: Vec<f64>, nx: usize) -> Self {
        ConstraintSpec {
            u_min,
            u_max,
            free: (0..nx).collect(),
            hard: Vec::new(),
            soft: Vec::new(),
        }
    }

    pub fn has_state_constraints(&self) -> bool {
        !self.hard.is_empty() || !self.soft.is_empty()
    }

    fn check(&self, nx: usize, nu: usize) -> Result<()> {
        if self.u_min.len() != nu || self.u_max.len() != nu {
            return Err(Error::Dimension(format!(
                "input bounds have lengths {}/{}, expected {nu}",
                self.u_min.len(),
                self.u_max.len()
            )));
        }
        for (i, (lo, hi)) in self.u_min.iter().zip(&self.u_max).enumerate() {
            if !(lo < hi) {
                return Err(Error::Validation(format!("u_min[{i}] = {lo} is not below u_max[{i}] = {hi}")));
            }
        }
        let mut seen = vec![false; nx];
        let indices = self
            .free
            .iter()
            .copied()
            .chain(self.hard.iter().map(|h| h.index))
            .chain(self.soft.iter().map(|s| s.index));
        for i in indices {
            if i >= nx {
                return Err(Error::Dimension(format!("state index {} out of range 1..={nx}", i + 1)));
            }
            if seen[i] {
                return Err(Error::Validation(format!(
                    "state index {} appears in more than one of F, B, S",
                    i + 1
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "state index {} is in none of F, B, S",
                missing + 1
            )));
        }
        for h in &self.hard {
            if !(h.min < h.max) {
                return Err(Error::Validation(format!(
                    "x_min = {} is not below x_max = {} for state {}",
                    h.min,
                    h.max,
                    h.index + 1
                )));
            }
        }
        for s in &self.soft {
            if !(s.radius > 0.0) || !s.center.is_finite() {
                return Err(Error::Validation(format!(
                    "soft constraint on state {} needs a finite center and positive radius",
                    s.index + 1
                )));
            }
        }
        Ok(())
    }
}

/// Steady-state tracking target `(x_ref, u_ref)`, held over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl Reference {
    pub fn zero(nx: usize, nu: usize) -> Self {
        Reference {
            x: vec![0.0; nx],
            u: vec![0.0; nu],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x.iter().chain(&self.u).all(|v| *v == 0.0)
    }

    /// `(x_ref, u_ref)` stacked.
    pub fn stacked(&self) -> Vec<f64> {
        self.x.iter().chain(&self.u).copied().collect()
    }

    /// The same target for the rate-augmented state `(x, u_prev)`, whose
    /// input `du` is zero at steady state.
    pub fn augmented(&self) -> Reference {
        Reference {
            x: self.x.iter().chain(&self.u).copied().collect(),
            u: vec![0.0; self.u.len()],
        }
    }
}

/// The constrained N-stage optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub model: LtiModel,
    pub weights: CostWeights,
    pub constraints: ConstraintSpec,
    pub horizon: usize,
}

impl MpcProblem {
    /// Checks dimensions, the index partition and bound ordering.
    /// Convexity is reported separately by [`validate`].
    pub fn new(
        model: LtiModel,
        weights: CostWeights,
        constraints: ConstraintSpec,
        horizon: usize,
    ) -> Result<Self> {
        let (nx, nu) = (model.nx(), model.nu());
        if horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        let dims = [
            ("Q", &weights.q, nx, nx),
            ("R", &weights.r, nu, nu),
            ("S", &weights.s, nx, nu),
            ("Q_N", &weights.qn, nx, nx),
        ];
        for (name, m, r, c) in dims {
            if m.nrows() != r || m.ncols() != c {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !(weights.sigma1 >= 0.0) || !(weights.sigma2 >= 0.0) {
            return Err(Error::Validation("slack penalties must be nonnegative".into()));
        }
        constraints.check(nx, nu)?;
        Ok(MpcProblem {
            model,
            weights,
            constraints,
            horizon,
        })
    }

    pub fn nx(&self) -> usize {
        self.model.nx()
    }

    pub fn nu(&self) -> usize {
        self.model.nu()
    }

    pub fn n_soft(&self) -> usize {
        self.constraints.soft.len()
    }

    /// Structural and convexity validation in one step.
    pub fn validated(self) -> Result<Self> {
        validate(&self).into_result()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Semidefinite,
    Definite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCheck {
    pub name: &'static str,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub required: Definiteness,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<EigenCheck>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.ok() {
            return Ok(());
        }
        let detail = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (min eigenvalue {:.3e}, asymmetry {:.1e})", c.name, c.min_eigenvalue, c.asymmetry))
            .collect::<Vec<_>>()
            .join(", ");
        Err(Error::Validation(detail))
    }
}

fn eigen_check(name: &'static str, m: &Mat, required: Definiteness) -> EigenCheck {
    let asymmetry = (m - m.transpose()).amax();
    let min_eigenvalue = sym_eigenvalues(m).first().copied().unwrap_or(0.0);
    let scale = m.amax().max(1.0);
    let pass = asymmetry <= EIG_TOL * scale
        && match required {
            Definiteness::Semidefinite => min_eigenvalue >= -EIG_TOL,
            Definiteness::Definite => min_eigenvalue > EIG_TOL,
        };
    EigenCheck {
        name,
        min_eigenvalue,
        asymmetry,
        required,
        pass,
    }
}

/// Eigenvalue conditions on `Q`, `Q_N`, `R` and the joint stage matrix
/// `[Q S; S' R]`.
pub fn validate(p: &MpcProblem) -> ValidationReport {
    let w = &p.weights;
    let mut joint = block_diag(&[&w.q, &w.r]);
    let nx = w.q.nrows();
    joint.view_mut((0, nx), (nx, w.r.nrows())).copy_from(&w.s);
    joint
        .view_mut((nx, 0), (w.r.nrows(), nx))
        .copy_from(&w.s.transpose());
    ValidationReport {
        checks: vec![
            eigen_check("Q", &w.q, Definiteness::Semidefinite),
            eigen_check("Q_N", &w.qn, Definiteness::Semidefinite),
            eigen_check("R", &w.r, Definiteness::Definite),
            eigen_check("[Q S; S' R]", &joint, Definiteness::Semidefinite),
        ],
    }
}

/// Remodels input-rate bounds as hard state constraints.
///
/// The augmented state is `(x, u_prev)` and the new input is `du`, with
/// `u = u_prev + du`. The original input box moves onto `u_prev` (which
/// joins the hard set), and the weights are rewritten so the stage cost of
/// any trajectory is unchanged.
pub fn augment_for_rate_constraints(p: &MpcProblem, du_min: &[f64], du_max: &[f64]) -> Result<MpcProblem> {
    let (nx, nu) = (p.nx(), p.nu());
    if du_min.len() != nu || du_max.len() != nu {
        return Err(Error::Dimension(format!(
            "rate bounds have lengths {}/{}, expected {nu}",
            du_min.len(),
            du_max.len()
        )));
    }
    if let Some(i) = (0..nu).find(|&i| !(du_min[i] < du_max[i])) {
        return Err(Error::Validation(format!("du_min[{i}] is not below du_max[{i}]")));
    }
    let (a, b) = (p.model.a(), p.model.b());
    let mut a_aug = Mat::zeros(nx + nu, nx + nu);
    a_aug.view_mut((0, 0), (nx, nx)).copy_from(a);
    a_aug.view_mut((0, nx), (nx, nu)).copy_from(b);
    a_aug
        .view_mut((nx, nx), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    let mut b_aug = Mat::zeros(nx + nu, nu);
    b_aug.view_mut((0, 0), (nx, nu)).copy_from(b);
    b_aug.view_mut((nx, 0), (nu, nu)).copy_from(&Mat::identity(nu, nu));

    let w = &p.weights;
    let mut q = Mat::zeros(nx + nu, nx + nu);
    q.view_mut((0, 0), (nx, nx)).copy_from(&w.q);
    q.view_mut((0, nx), (nx, nu)).copy_from(&w.s);
    q.view_mut((nx, 0), (nu, nx)).copy_from(&w.s.transpose());
    q.view_mut((nx, nx), (nu, nu)).copy_from(&w.r);
    let mut s = Mat::zeros(nx + nu, nu);
    s.view_mut((0, 0), (nx, nu)).copy_from(&w.s);
    s.view_mut((nx, 0), (nu, nu)).copy_from(&w.r);
    let qn = block_diag(&[&w.qn, &Mat::zeros(nu, nu)]);
    let weights = CostWeights {
        q,
        r: w.r.clone(),
        s,
        qn,
        sigma1: w.sigma1,
        sigma2: w.sigma2,
    };

    let c = &p.constraints;
    let mut hard = c.hard.clone();
    hard.extend((0..nu).map(|j| StateBox {
        index: nx + j,
        min: c.u_min[j],
        max: c.u_max[j],
    }));
    let constraints = ConstraintSpec {
        u_min: du_min.to_vec(),
        u_max: du_max.to_vec(),
        free: c.free.clone(),
        hard,
        soft: c.soft.clone(),
    };
    let out = MpcProblem::new(LtiModel::new(a_aug, b_aug)?, weights, constraints, p.horizon)?;
    out.validated()
}
