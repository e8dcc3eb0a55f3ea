use crate::error::{Error, Result};
use crate::linalg::{sym_extremes, symmetrize, Mat, Vector};
use crate::model::{LtiModel, MpcProblem, Reference};

/// Stacked predictions `(x_0, .., x_N) = Omega x + Gamma z` for the input
/// sequence `z = (u_0, .., u_{N-1})`.
pub fn prediction_matrices(model: &LtiModel, horizon: usize) -> (Mat, Mat) {
    let (nx, nu) = (model.nx(), model.nu());
    let mut omega = Mat::zeros((horizon + 1) * nx, nx);
    let mut gamma = Mat::zeros((horizon + 1) * nx, horizon * nu);
    let mut ak = Mat::identity(nx, nx);
    // powers[k] = A^k B
    let mut powers = Vec::with_capacity(horizon);
    let mut akb = model.b().clone();
    for k in 0..=horizon {
        omega.view_mut((k * nx, 0), (nx, nx)).copy_from(&ak);
        ak = model.a() * ak;
        if k < horizon {
            powers.push(akb.clone());
            akb = model.a() * akb;
        }
    }
    for k in 1..=horizon {
        for j in 0..k {
            gamma
                .view_mut((k * nx, j * nu), (nx, nu))
                .copy_from(&powers[k - 1 - j]);
        }
    }
    (omega, gamma)
}

/// Quadratic and linear cost terms after eliminating the states:
/// the stage and terminal costs equal
/// `1/2 z'Hz + z'(Phi x + Phi_ref (x_ref, u_ref))` plus terms free of `z`.
pub(crate) struct CondensedCost {
    pub h: Mat,
    pub phi: Mat,
    pub phi_ref: Mat,
    pub omega: Mat,
    pub gamma: Mat,
}

pub(crate) fn condensed_cost(p: &MpcProblem) -> CondensedCost {
    let (nx, nu, n_h) = (p.nx(), p.nu(), p.horizon);
    let w = &p.weights;
    let (omega, gamma) = prediction_matrices(&p.model, n_h);
    let mut qt = Mat::zeros((n_h + 1) * nx, (n_h + 1) * nx);
    let mut st = Mat::zeros((n_h + 1) * nx, n_h * nu);
    let mut rb = Mat::zeros(n_h * nu, n_h * nu);
    for k in 0..n_h {
        qt.view_mut((k * nx, k * nx), (nx, nx)).copy_from(&w.q);
        st.view_mut((k * nx, k * nu), (nx, nu)).copy_from(&w.s);
        rb.view_mut((k * nu, k * nu), (nu, nu)).copy_from(&w.r);
    }
    qt.view_mut((n_h * nx, n_h * nx), (nx, nx)).copy_from(&w.qn);

    let gq = gamma.transpose() * &qt + st.transpose();
    let gs = gamma.transpose() * &st;
    // gq * gamma already carries the S'Gamma cross term
    let h = symmetrize(&(&gq * &gamma + &rb + &gs));
    let phi = &gq * &omega;

    // reference terms: -(Gamma'Q + S')(1 (x) x_ref) - (R + Gamma'S)(1 (x) u_ref)
    let mut ones_x = Mat::zeros((n_h + 1) * nx, nx);
    for k in 0..=n_h {
        ones_x
            .view_mut((k * nx, 0), (nx, nx))
            .copy_from(&Mat::identity(nx, nx));
    }
    let mut ones_u = Mat::zeros(n_h * nu, nu);
    for k in 0..n_h {
        ones_u
            .view_mut((k * nu, 0), (nu, nu))
            .copy_from(&Mat::identity(nu, nu));
    }
    let mut phi_ref = Mat::zeros(n_h * nu, nx + nu);
    phi_ref
        .view_mut((0, 0), (n_h * nu, nx))
        .copy_from(&(-(&gq * ones_x)));
    phi_ref
        .view_mut((0, nx), (n_h * nu, nu))
        .copy_from(&(-((&rb + &gs) * ones_u)));
    CondensedCost {
        h,
        phi,
        phi_ref,
        omega,
        gamma,
    }
}

/// The input-only QP `min 1/2 z'H_F z + z'Phi x` over a box.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub h: Mat,
    pub phi: Mat,
    /// Linear-term coupling of the stacked reference `(x_ref, u_ref)`.
    pub phi_ref: Mat,
    pub z_min: Vec<f64>,
    pub z_max: Vec<f64>,
    pub l: f64,
    pub mu: f64,
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
}

impl CondensedQp {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Length of the parameter vector `(x, x_ref, u_ref)`.
    pub fn n_param(&self) -> usize {
        2 * self.nx + self.nu
    }

    pub fn param(&self, x: &[f64], r: &Reference) -> Vec<f64> {
        x.iter().chain(&r.x).chain(&r.u).copied().collect()
    }

    /// `[Phi, Phi_ref]`, acting on [`CondensedQp::param`].
    pub fn phi_ext(&self) -> Mat {
        let mut m = Mat::zeros(self.n(), self.n_param());
        m.view_mut((0, 0), (self.n(), self.nx)).copy_from(&self.phi);
        m.view_mut((0, self.nx), (self.n(), self.nx + self.nu))
            .copy_from(&self.phi_ref);
        m
    }

    pub fn linear_term(&self, x: &[f64], r: &Reference) -> Vector {
        self.phi_ext() * Vector::from_vec(self.param(x, r))
    }

    pub fn objective(&self, z: &[f64], lin: &Vector) -> f64 {
        let z = Vector::from_column_slice(z);
        0.5 * z.dot(&(&self.h * &z)) + z.dot(lin)
    }
}

/// Eliminates the states of an input-constrained problem.
pub fn condense(p: &MpcProblem) -> Result<CondensedQp> {
    if p.constraints.has_state_constraints() {
        return Err(Error::NotCondensable);
    }
    crate::model::validate(p).into_result()?;
    let c = condensed_cost(p);
    let (mu, l) = sym_extremes(&c.h);
    if !(mu > 0.0) {
        return Err(Error::Validation(format!("condensed Hessian is not positive definite (min eigenvalue {mu:.3e})")));
    }
    let n_h = p.horizon;
    let rep = |v: &[f64]| -> Vec<f64> { (0..n_h).flat_map(|_| v.iter().copied()).collect() };
    Ok(CondensedQp {
        h: c.h,
        phi: c.phi,
        phi_ref: c.phi_ref,
        z_min: rep(&p.constraints.u_min),
        z_max: rep(&p.constraints.u_max),
        l,
        mu,
        nx: p.nx(),
        nu: p.nu(),
        horizon: n_h,
    })
}
