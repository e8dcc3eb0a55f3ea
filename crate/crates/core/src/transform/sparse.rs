use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{MpcProblem, Reference};

/// Constraint kind of one component of the sparse decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Component {
    Free,
    Box { lo: f64, hi: f64 },
    /// State half of a cone pair; `slack` is the index of its `delta`.
    ConeState { slack: usize, center: f64, radius: f64 },
    /// Slack half of a cone pair; `state` is the index of its state.
    ConeSlack { state: usize },
}

/// Positions of the blocks of `z = (u_0, .., u_{N-1}, x_0, d_0, .., x_N, d_N)`
/// and the constraint kind of every component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub nx: usize,
    pub nu: usize,
    pub ns: usize,
    pub horizon: usize,
    pub components: Vec<Component>,
}

impl Layout {
    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn u_offset(&self, k: usize) -> usize {
        k * self.nu
    }

    pub fn x_offset(&self, k: usize) -> usize {
        self.horizon * self.nu + k * (self.nx + self.ns)
    }

    pub fn d_offset(&self, k: usize) -> usize {
        self.x_offset(k) + self.nx
    }

    /// `(state index, slack index, center, radius)` of every cone pair.
    pub fn cones(&self) -> Vec<(usize, usize, f64, f64)> {
        self.components
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match *c {
                Component::ConeState { slack, center, radius } => Some((i, slack, center, radius)),
                _ => None,
            })
            .collect()
    }

    fn expected_len(&self) -> usize {
        self.horizon * (self.nu + self.nx + self.ns) + self.nx + self.ns
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.n() != self.expected_len() || len != self.n() {
            return Err(Error::Layout(format!(
                "vector of length {len} against a layout of {} components",
                self.n()
            )));
        }
        Ok(())
    }
}

/// The sparse QP `min 1/2 z'H_A z + h'z  s.t.  z in K, F z = b(x)`.
#[derive(Debug, Clone)]
pub struct SparseQp {
    pub h_a: Mat,
    /// Reference-free part of the linear term (slack penalties).
    pub h0: Vector,
    /// Linear-term coupling of the stacked reference `(x_ref, u_ref)`.
    pub h_ref: Mat,
    pub f: Mat,
    /// `b(x) = b_mat x + b_const`.
    pub b_mat: Mat,
    pub b_const: Vector,
    pub layout: Layout,
    /// Variable scaling: the solver works on `z_scaled = scale .* z`.
    pub scale: Vec<f64>,
}

impl SparseQp {
    pub fn n(&self) -> usize {
        self.h_a.nrows()
    }

    pub fn m(&self) -> usize {
        self.f.nrows()
    }

    pub fn h(&self, r: &Reference) -> Vector {
        &self.h0 + &self.h_ref * Vector::from_vec(r.stacked())
    }

    pub fn b(&self, x: &[f64]) -> Vector {
        &self.b_mat * Vector::from_column_slice(x) + &self.b_const
    }

    pub fn objective(&self, z: &[f64], h: &Vector) -> f64 {
        let z = Vector::from_column_slice(z);
        0.5 * z.dot(&(&self.h_a * &z)) + z.dot(h)
    }

    /// Maps a solver vector back to original coordinates.
    pub fn unscale(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    pub fn to_scaled(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    /// Sparse decision vector for an input sequence: states by simulation,
    /// slacks at their smallest feasible values.
    pub fn point_from_inputs(&self, p: &MpcProblem, x: &[f64], u: &[f64]) -> Vec<f64> {
        let lay = &self.layout;
        let mut z = vec![0.0; lay.n()];
        z[..u.len()].copy_from_slice(u);
        let mut xk = x.to_vec();
        for k in 0..=lay.horizon {
            let xo = lay.x_offset(k);
            z[xo..xo + lay.nx].copy_from_slice(&xk);
            for (j, s) in p.constraints.soft.iter().enumerate() {
                z[lay.d_offset(k) + j] = ((xk[s.index] - s.center).abs() - s.radius).max(0.0);
            }
            if k < lay.horizon {
                xk = p.model.step(&xk, &u[k * lay.nu..(k + 1) * lay.nu]);
            }
        }
        self.to_scaled(&z)
    }
}

/// Assembles the sparse form. Stage costs include the `1/2`
/// factor; every stage `k = 0..N` carries slacks, and the stage-0 state is
/// tied to the measurement, so it has no box.
pub fn build_sparse(p: &MpcProblem) -> Result<SparseQp> {
    crate::model::validate(p).into_result()?;
    let (nx, nu, ns, n_h) = (p.nx(), p.nu(), p.n_soft(), p.horizon);
    let w = &p.weights;
    let mut components = Vec::new();
    for _ in 0..n_h {
        for j in 0..nu {
            components.push(Component::Box {
                lo: p.constraints.u_min[j],
                hi: p.constraints.u_max[j],
            });
        }
    }
    let mut lay = Layout {
        nx,
        nu,
        ns,
        horizon: n_h,
        components,
    };
    for k in 0..=n_h {
        let xo = lay.x_offset(k);
        let mut stage = vec![Component::Free; nx + ns];
        if k > 0 {
            for hb in &p.constraints.hard {
                stage[hb.index] = Component::Box { lo: hb.min, hi: hb.max };
            }
        }
        for (j, s) in p.constraints.soft.iter().enumerate() {
            stage[s.index] = Component::ConeState {
                slack: xo + nx + j,
                center: s.center,
                radius: s.radius,
            };
            stage[nx + j] = Component::ConeSlack { state: xo + s.index };
        }
        lay.components.extend(stage);
    }
    let n = lay.n();
    debug_assert_eq!(n, lay.expected_len());

    let mut h_a = Mat::zeros(n, n);
    let mut h0 = Vector::zeros(n);
    let mut h_ref = Mat::zeros(n, nx + nu);
    for k in 0..=n_h {
        let xo = lay.x_offset(k);
        let qk = if k < n_h { &w.q } else { &w.qn };
        h_a.view_mut((xo, xo), (nx, nx)).copy_from(qk);
        h_ref.view_mut((xo, 0), (nx, nx)).copy_from(&(-qk));
        if k < n_h {
            let uo = lay.u_offset(k);
            h_a.view_mut((uo, uo), (nu, nu)).copy_from(&w.r);
            h_a.view_mut((xo, uo), (nx, nu)).copy_from(&w.s);
            h_a.view_mut((uo, xo), (nu, nx)).copy_from(&w.s.transpose());
            h_ref.view_mut((xo, nx), (nx, nu)).copy_from(&(-&w.s));
            h_ref.view_mut((uo, 0), (nu, nx)).copy_from(&(-w.s.transpose()));
            h_ref.view_mut((uo, nx), (nu, nu)).copy_from(&(-&w.r));
        }
        let d = lay.d_offset(k);
        for j in 0..ns {
            h_a[(d + j, d + j)] = 2.0 * w.sigma2;
            h0[d + j] = w.sigma1;
        }
    }

    let m = (n_h + 1) * nx;
    let mut f = Mat::zeros(m, n);
    let x0 = lay.x_offset(0);
    f.view_mut((0, x0), (nx, nx)).copy_from(&Mat::identity(nx, nx));
    for k in 0..n_h {
        let r = (k + 1) * nx;
        f.view_mut((r, lay.x_offset(k + 1)), (nx, nx))
            .copy_from(&Mat::identity(nx, nx));
        f.view_mut((r, lay.x_offset(k)), (nx, nx))
            .copy_from(&(-p.model.a()));
        f.view_mut((r, lay.u_offset(k)), (nx, nu))
            .copy_from(&(-p.model.b()));
    }
    let mut b_mat = Mat::zeros(m, nx);
    b_mat
        .view_mut((0, 0), (nx, nx))
        .copy_from(&Mat::identity(nx, nx));
    Ok(SparseQp {
        h_a,
        h0,
        h_ref,
        f,
        b_mat,
        b_const: Vector::zeros(m),
        layout: lay,
        scale: vec![1.0; n],
    })
}

/// Substitutes `z = D z_scaled` with `D = sigma` on the soft-constrained
/// states and slacks, which brings the multipliers of the soft rows from
/// about `sigma` down to about 1. The returned problem is in scaled
/// coordinates (`z_scaled = scale .* z`); cone centers and radii shrink
/// with the state.
pub fn scale_soft_constraints(s: &SparseQp, sigma: f64) -> Result<SparseQp> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("scaling factor must be positive, got {sigma}")));
    }
    let mut out = s.clone();
    let mut d = vec![1.0; s.n()];
    for (xi, di, _, _) in s.layout.cones() {
        d[xi] = 1.0 / sigma;
        d[di] = 1.0 / sigma;
    }
    if d.iter().all(|v| *v == 1.0) {
        return Ok(out);
    }
    let n = s.n();
    for i in 0..n {
        for j in 0..n {
            out.h_a[(i, j)] = s.h_a[(i, j)] / (d[i] * d[j]);
        }
        out.h0[i] = s.h0[i] / d[i];
        for c in 0..s.h_ref.ncols() {
            out.h_ref[(i, c)] = s.h_ref[(i, c)] / d[i];
        }
        for r in 0..s.m() {
            out.f[(r, i)] = s.f[(r, i)] / d[i];
        }
    }
    for c in out.layout.components.iter_mut() {
        if let Component::ConeState { center, radius, .. } = c {
            *center /= sigma;
            *radius /= sigma;
        }
    }
    out.scale = s.scale.iter().zip(&d).map(|(a, b)| a * b).collect();
    Ok(out)
}
