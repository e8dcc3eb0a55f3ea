//! ADMM with an offline KKT inverse for the sparse problem, in double
//! precision and in bit-accurate fixed point.
//!
//! The multiplier is stored as `mu = nu / rho`, so with `rho` a power of two
//! not below 1 every scaling by `rho` is an exact left shift:
//!
//! ```text
//! y  = M11 (-h + rho (z - mu)) + M12 b(x)
//! z+ = P_K(y + mu)
//! mu+ = mu + y - z+
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{fit, mul_trunc_raw, quantize_raw, FxFormat, OverflowPolicy, Rounding};
use crate::linalg::{Mat, Vector};
use crate::transform::{AdmmOffline, Component, Layout, SparseQp};
use crate::model::Reference;

/// Euclidean projection of `(x0, d0)` onto `{|x - c| <= r + d, d >= 0}`.
pub fn project_cone(x0: f64, d0: f64, c: f64, r: f64) -> (f64, f64) {
    let s = x0 - c;
    let a = s.abs();
    if d0 >= 0.0 && a <= r + d0 {
        return (x0, d0);
    }
    if a <= r {
        return (x0, 0.0);
    }
    let sum = a + d0;
    let sign = s.signum();
    if sum < r {
        return (c + sign * r, 0.0);
    }
    (c + sign * 0.5 * (sum + r), 0.5 * (sum - r))
}

/// [`project_cone`] on raw integers; the averages are arithmetic shifts, so
/// the result may sit one LSB below the exact projection but always lies
/// on the cone.
pub fn project_cone_raw(x0: i64, d0: i64, c: i64, r: i64) -> (i64, i64) {
    let (x0, d0, c, r) = (x0 as i128, d0 as i128, c as i128, r as i128);
    let s = x0 - c;
    let a = s.abs();
    let out = if d0 >= 0 && a <= r + d0 {
        (x0, d0)
    } else if a <= r {
        (x0, 0)
    } else {
        let sum = a + d0;
        let sign = s.signum();
        if sum < r {
            (c + sign * r, 0)
        } else {
            (c + sign * ((sum + r) >> 1), (sum - r) >> 1)
        }
    };
    (out.0 as i64, out.1 as i64)
}

fn project_in_place(v: &mut [f64], comps: &[Component]) {
    for i in 0..comps.len() {
        match comps[i] {
            Component::Free | Component::ConeSlack { .. } => {}
            Component::Box { lo, hi } => v[i] = v[i].max(lo).min(hi),
            Component::ConeState { slack, center, radius } => {
                let (x, d) = project_cone(v[i], v[slack], center, radius);
                v[i] = x;
                v[slack] = d;
            }
        }
    }
}

/// Projection onto the product set described by `layout`.
pub fn project_k(v: &[f64], layout: &Layout) -> Result<Vec<f64>> {
    layout.check(v.len())?;
    let mut out = v.to_vec();
    project_in_place(&mut out, &layout.components);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    /// `z_0, .., z_I`.
    pub iterates: Vec<Vec<f64>>,
    /// `||y_i - z_i||_inf` for `i = 1..I`.
    pub primal_residuals: Vec<f64>,
}

/// The recursion with explicit data; `m12b = M12 b(x)`.
#[allow(clippy::too_many_arguments)]
pub fn admm_iterate(
    m11: &Mat,
    m12b: &[f64],
    rho: f64,
    h: &[f64],
    comps: &[Component],
    iters: usize,
    z0: &[f64],
    nu0: &[f64],
) -> AdmmRun {
    let n = h.len();
    let m12b = Vector::from_column_slice(m12b);
    let h = Vector::from_column_slice(h);
    let mut z = z0.to_vec();
    let mut mu: Vec<f64> = nu0.iter().map(|v| v / rho).collect();
    let mut y = vec![0.0; n];
    let mut iterates = Vec::with_capacity(iters + 1);
    iterates.push(z.clone());
    let mut primal_residuals = Vec::with_capacity(iters);
    let mut w = Vector::zeros(n);
    for _ in 0..iters {
        for j in 0..n {
            w[j] = rho * (z[j] - mu[j]) - h[j];
        }
        let yv = m11 * &w + &m12b;
        y.copy_from_slice(yv.as_slice());
        let mut v: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a + b).collect();
        project_in_place(&mut v, comps);
        let mut res: f64 = 0.0;
        for j in 0..n {
            mu[j] += y[j] - v[j];
            res = res.max((y[j] - v[j]).abs());
        }
        z = v;
        primal_residuals.push(res);
        iterates.push(z.clone());
    }
    AdmmRun {
        z,
        y,
        nu: mu.iter().map(|v| v * rho).collect(),
        iterates,
        primal_residuals,
    }
}

/// Double-precision solve at state `x` and reference `r` (in the
/// coordinates of `s`); cold start at zero unless warm-start vectors are
/// given.
pub fn admm_solve(
    off: &AdmmOffline,
    s: &SparseQp,
    x: &[f64],
    r: &Reference,
    iters: usize,
    z0: Option<&[f64]>,
    nu0: Option<&[f64]>,
) -> Result<AdmmRun> {
    let n = s.n();
    if x.len() != s.b_mat.ncols() {
        return Err(Error::Dimension(format!("state of length {}", x.len())));
    }
    let zeros = vec![0.0; n];
    let (z0, nu0) = (z0.unwrap_or(&zeros), nu0.unwrap_or(&zeros));
    s.layout.check(z0.len())?;
    s.layout.check(nu0.len())?;
    let h = s.h(r);
    let m12b = &off.m12 * s.b(x);
    Ok(admm_iterate(&off.m11, m12b.as_slice(), off.rho, h.as_slice(), &s.layout.components, iters, z0, nu0))
}

/// Terminal padding of shifted warm starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Repeat the last stage block.
    #[default]
    Repeat,
    Zero,
}

fn shift_stages(v: &[f64], layout: &Layout, pad: Padding) -> Vec<f64> {
    let mut out = v.to_vec();
    let (nu, n_h) = (layout.nu, layout.horizon);
    let sw = layout.nx + layout.ns;
    let shift = |out: &mut [f64], start: usize, block: usize, count: usize| {
        if count == 0 || block == 0 {
            return;
        }
        out.copy_within(start + block..start + block * count, start);
        let last = start + block * (count - 1);
        match pad {
            Padding::Repeat => {
                if count > 1 {
                    out.copy_within(last - block..last, last);
                }
            }
            Padding::Zero => out[last..last + block].fill(0.0),
        }
    };
    shift(&mut out, 0, nu, n_h);
    shift(&mut out, layout.x_offset(0), sw, n_h + 1);
    out
}

/// Shifts the primal and multiplier vectors one stage forward.
pub fn warm_start_shift(z: &[f64], nu: &[f64], layout: &Layout, pad: Padding) -> Result<(Vec<f64>, Vec<f64>)> {
    layout.check(z.len())?;
    layout.check(nu.len())?;
    Ok((shift_stages(z, layout, pad), shift_stages(nu, layout, pad)))
}

/// Per-signal formats of the fixed-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmFormats {
    /// Linear term `h` and right-hand side `b(x)`.
    pub h: FxFormat,
    pub b: FxFormat,
    /// `M12 b(x)` and its partial sums.
    pub m12b: FxFormat,
    /// `-h + rho (z - mu)`.
    pub w: FxFormat,
    /// Partial sums of `M11 w`.
    pub acc: FxFormat,
    pub y: FxFormat,
    /// `y + mu`.
    pub v: FxFormat,
    pub z: FxFormat,
    pub mu: FxFormat,
}

/// Largest magnitudes seen per signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmmMaxima {
    pub h: f64,
    pub b: f64,
    pub m12b: f64,
    pub w: f64,
    pub acc: f64,
    pub y: f64,
    pub v: f64,
    pub z: f64,
    pub mu: f64,
}

impl AdmmMaxima {
    fn as_array(&self) -> [f64; 9] {
        [self.h, self.b, self.m12b, self.w, self.acc, self.y, self.v, self.z, self.mu]
    }

    fn from_array(a: [f64; 9]) -> Self {
        AdmmMaxima {
            h: a[0],
            b: a[1],
            m12b: a[2],
            w: a[3],
            acc: a[4],
            y: a[5],
            v: a[6],
            z: a[7],
            mu: a[8],
        }
    }

    pub fn merge(&mut self, o: &AdmmMaxima) {
        let (a, b) = (self.as_array(), o.as_array());
        let mut m = [0.0; 9];
        for i in 0..9 {
            m[i] = a[i].max(b[i]);
        }
        *self = Self::from_array(m);
    }
}

impl AdmmFormats {
    pub fn uniform(fmt: FxFormat) -> Self {
        AdmmFormats {
            h: fmt,
            b: fmt,
            m12b: fmt,
            w: fmt,
            acc: fmt,
            y: fmt,
            v: fmt,
            z: fmt,
            mu: fmt,
        }
    }

    /// Formats wide enough never to overflow at desk scale; used to
    /// measure signal ranges.
    pub fn wide(frac_bits: u32) -> Result<Self> {
        Ok(Self::uniform(FxFormat::new(62 - frac_bits, frac_bits)?))
    }

    /// Integer bits from observed maxima times `safety`.
    pub fn from_maxima(m: &AdmmMaxima, frac_bits: u32, safety: f64) -> Result<Self> {
        let f = |v: f64| FxFormat::for_bound(v * safety, frac_bits);
        Ok(AdmmFormats {
            h: f(m.h)?,
            b: f(m.b)?,
            m12b: f(m.m12b)?,
            w: f(m.w)?,
            acc: f(m.acc)?,
            y: f(m.y)?,
            v: f(m.v)?,
            z: f(m.z)?,
            mu: f(m.mu)?,
        })
    }

    fn all(&self) -> [FxFormat; 9] {
        [self.h, self.b, self.m12b, self.w, self.acc, self.y, self.v, self.z, self.mu]
    }
}

#[derive(Debug, Clone, Copy)]
enum RawComp {
    Free,
    Box { lo: i64, hi: i64 },
    ConeState { slack: usize, c: i64, r: i64 },
    ConeSlack,
}

/// Fixed-point solver data.
#[derive(Debug, Clone)]
pub struct AdmmFx {
    pub frac_bits: u32,
    pub formats: AdmmFormats,
    pub policy: OverflowPolicy,
    pub rho: f64,
    shift: u32,
    n: usize,
    m: usize,
    m11: Vec<i64>,
    m12: Vec<i64>,
    comps: Vec<RawComp>,
    m11_f64: Mat,
}

#[derive(Debug, Clone)]
pub struct AdmmFxRun {
    pub z: Vec<f64>,
    pub nu: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub primal_residuals: Vec<f64>,
    /// Quantized linear term.
    pub h: Vec<f64>,
    /// `M12 b(x)` as computed in fixed point.
    pub m12b: Vec<f64>,
    /// Initial multiplier after quantization.
    pub nu0: Vec<f64>,
    pub maxima: AdmmMaxima,
}

fn raw_matrix(m: &Mat, b: u32) -> Result<Vec<i64>> {
    let wide = FxFormat::new(64 - b, b)?;
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(quantize_raw(m[(r, c)], wide, Rounding::Nearest)?);
        }
    }
    Ok(out)
}

#[inline]
fn dot_track(
    row: &[i64],
    col: &[i64],
    frac: u32,
    acc: FxFormat,
    policy: OverflowPolicy,
    signal: &'static str,
    peak: &mut u64,
) -> Result<i64> {
    let mut s: i64 = 0;
    for (&a, &b) in row.iter().zip(col) {
        if a == 0 || b == 0 {
            continue;
        }
        s = fit(s as i128 + mul_trunc_raw(a, b, frac), acc, policy, signal)?;
        *peak = (*peak).max(s.unsigned_abs());
    }
    Ok(s)
}

impl AdmmFx {
    /// Boxes are rounded inward; cone centers to nearest and radii down
    /// by the center's rounding error, so the quantized set lies inside the
    /// exact one.
    pub fn new(off: &AdmmOffline, s: &SparseQp, formats: AdmmFormats, policy: OverflowPolicy) -> Result<Self> {
        let b = off.frac_bits;
        if formats.all().iter().any(|f| f.frac_bits() != b) {
            return Err(Error::FormatMismatch(format!("signal formats must all have {b} fraction bits")));
        }
        if off.rho < 1.0 {
            return Err(Error::Parameter(format!(
                "fixed-point ADMM needs rho >= 1 so that scaling by rho is a left shift (rho = {})",
                off.rho
            )));
        }
        let wide = FxFormat::new(64 - b, b)?;
        let lsb = wide.lsb();
        let mut comps = Vec::with_capacity(s.n());
        for c in &s.layout.components {
            comps.push(match *c {
                Component::Free => RawComp::Free,
                Component::ConeSlack { .. } => RawComp::ConeSlack,
                Component::Box { lo, hi } => {
                    let (l, h) = (
                        quantize_raw(lo, wide, Rounding::Ceil)?,
                        quantize_raw(hi, wide, Rounding::Truncate)?,
                    );
                    if l > h {
                        return Err(Error::Precision(format!("box [{lo}, {hi}] is empty at b = {b}")));
                    }
                    RawComp::Box { lo: l, hi: h }
                }
                Component::ConeState { slack, center, radius } => {
                    let c = quantize_raw(center, wide, Rounding::Nearest)?;
                    let err = (c as f64 * lsb - center).abs();
                    let r = quantize_raw(radius - err, wide, Rounding::Truncate)?;
                    if r <= 0 {
                        return Err(Error::Precision(format!("cone radius {radius} vanishes at b = {b}")));
                    }
                    RawComp::ConeState { slack, c, r }
                }
            });
        }
        Ok(AdmmFx {
            frac_bits: b,
            formats,
            policy,
            rho: off.rho,
            shift: off.rho.log2().round() as u32,
            n: s.n(),
            m: s.m(),
            m11: raw_matrix(&off.m11_hat, b)?,
            m12: raw_matrix(&off.m12_hat, b)?,
            comps,
            m11_f64: off.m11_hat.clone(),
        })
    }

    fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    fn to_f64(&self, raw: &[i64]) -> Vec<f64> {
        let l = self.lsb();
        raw.iter().map(|v| *v as f64 * l).collect()
    }

    /// The quantized constraint set in the layout's terms.
    pub fn components(&self) -> Vec<Component> {
        let l = self.lsb();
        self.comps
            .iter()
            .enumerate()
            .map(|(i, c)| match *c {
                RawComp::Free => Component::Free,
                RawComp::ConeSlack => Component::ConeSlack {
                    state: self
                        .comps
                        .iter()
                        .position(|o| matches!(o, RawComp::ConeState { slack, .. } if *slack == i))
                        .unwrap_or(i),
                },
                RawComp::Box { lo, hi } => Component::Box {
                    lo: lo as f64 * l,
                    hi: hi as f64 * l,
                },
                RawComp::ConeState { slack, c, r } => Component::ConeState {
                    slack,
                    center: c as f64 * l,
                    radius: r as f64 * l,
                },
            })
            .collect()
    }

    fn project(&self, v: &mut [i64]) {
        for i in 0..self.n {
            match self.comps[i] {
                RawComp::Free | RawComp::ConeSlack => {}
                RawComp::Box { lo, hi } => v[i] = v[i].clamp(lo, hi),
                RawComp::ConeState { slack, c, r } => {
                    let (x, d) = project_cone_raw(v[i], v[slack], c, r);
                    v[i] = x;
                    v[slack] = d;
                }
            }
        }
    }

    /// Solves with linear term `h` and right-hand side `b(x)`, both given
    /// in the solver's coordinates and truncated to the grid.
    pub fn solve(&self, h: &[f64], bx: &[f64], iters: usize, z0: Option<&[f64]>, nu0: Option<&[f64]>) -> Result<AdmmFxRun> {
        if h.len() != self.n || bx.len() != self.m {
            return Err(Error::Dimension("linear term or right-hand side".into()));
        }
        let (b, f, pol, k) = (self.frac_bits, &self.formats, self.policy, self.shift);
        let mut mx = [0u64; 9];
        let q = |v: &[f64], fmt: FxFormat, peak: &mut u64| -> Result<Vec<i64>> {
            let r = v
                .iter()
                .map(|x| quantize_raw(*x, fmt, Rounding::Truncate))
                .collect::<Result<Vec<_>>>()?;
            *peak = r.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
            Ok(r)
        };
        let hq = q(h, f.h, &mut mx[0])?;
        let bq = q(bx, f.b, &mut mx[1])?;
        let mut m12b = vec![0i64; self.n];
        for (r, out) in m12b.iter_mut().enumerate() {
            *out = dot_track(&self.m12[r * self.m..(r + 1) * self.m], &bq, b, f.m12b, pol, "m12b", &mut mx[2])?;
        }

        let wide = FxFormat::new(64 - b, b)?;
        let init = |v: Option<&[f64]>, scale: f64| -> Result<Vec<i64>> {
            match v {
                None => Ok(vec![0; self.n]),
                Some(v) if v.len() != self.n => Err(Error::Dimension("initial iterate".into())),
                Some(v) => v
                    .iter()
                    .map(|x| quantize_raw(x * scale, wide, Rounding::Nearest))
                    .collect(),
            }
        };
        let mut z = init(z0, 1.0)?;
        self.project(&mut z);
        let mut mu = init(nu0, 1.0 / self.rho)?;
        for (j, v) in mu.iter().enumerate() {
            fit(*v as i128, f.mu, pol, "mu")?;
            fit(z[j] as i128, f.z, pol, "z")?;
        }
        let mu0 = mu.clone();

        let mut w = vec![0i64; self.n];
        let mut y = vec![0i64; self.n];
        let mut iterates = Vec::with_capacity(iters + 1);
        iterates.push(self.to_f64(&z));
        let mut primal_residuals = Vec::with_capacity(iters);
        for _ in 0..iters {
            for j in 0..self.n {
                let d = fit(z[j] as i128 - mu[j] as i128, f.w, pol, "w")?;
                let sh = fit((d as i128) << k, f.w, pol, "w")?;
                debug_assert_eq!(sh >> k, d);
                w[j] = fit(sh as i128 - hq[j] as i128, f.w, pol, "w")?;
                mx[3] = mx[3].max(w[j].unsigned_abs());
            }
            for r in 0..self.n {
                let a = dot_track(&self.m11[r * self.n..(r + 1) * self.n], &w, b, f.acc, pol, "acc", &mut mx[4])?;
                y[r] = fit(a as i128 + m12b[r] as i128, f.y, pol, "y")?;
                mx[5] = mx[5].max(y[r].unsigned_abs());
            }
            let mut v = vec![0i64; self.n];
            for j in 0..self.n {
                v[j] = fit(y[j] as i128 + mu[j] as i128, f.v, pol, "v")?;
                mx[6] = mx[6].max(v[j].unsigned_abs());
            }
            self.project(&mut v);
            let mut res = 0u64;
            for j in 0..self.n {
                z[j] = fit(v[j] as i128, f.z, pol, "z")?;
                mx[7] = mx[7].max(z[j].unsigned_abs());
                let diff = y[j] as i128 - z[j] as i128;
                res = res.max(diff.unsigned_abs() as u64);
                mu[j] = fit(mu[j] as i128 + diff, f.mu, pol, "mu")?;
                mx[8] = mx[8].max(mu[j].unsigned_abs());
            }
            primal_residuals.push(res as f64 * self.lsb());
            iterates.push(self.to_f64(&z));
        }
        let l = self.lsb();
        let mut m = [0.0; 9];
        for i in 0..9 {
            m[i] = mx[i] as f64 * l;
        }
        Ok(AdmmFxRun {
            z: self.to_f64(&z),
            nu: mu.iter().map(|v| *v as f64 * l * self.rho).collect(),
            iterates,
            primal_residuals,
            h: self.to_f64(&hq),
            m12b: self.to_f64(&m12b),
            nu0: mu0.iter().map(|v| *v as f64 * l * self.rho).collect(),
            maxima: AdmmMaxima::from_array(m),
        })
    }

    /// Exact-arithmetic run on the same quantized data, constraint set,
    /// initial iterates and cached `M12 b(x)` as `run`.
    pub fn twin(&self, run: &AdmmFxRun, iters: usize) -> AdmmRun {
        admm_iterate(
            &self.m11_f64,
            &run.m12b,
            self.rho,
            &run.h,
            &self.components(),
            iters,
            &run.iterates[0],
            &run.nu0,
        )
    }
}

/// One row of the exported ADMM trace.
#[derive(Debug, Clone, Serialize)]
pub struct AdmmTraceRow {
    pub iter: usize,
    pub objective: f64,
    /// `f(z_i) - f*`.
    pub residual: f64,
    pub primal_residual: f64,
    pub eta_observed: f64,
    pub eta_bound: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_examples() {
        assert_eq!(project_cone(0.2, 0.1, 0.0, 0.5), (0.2, 0.1));
        assert_eq!(project_cone(1.5, 0.0, 0.0, 0.5), (1.0, 0.5));
        assert_eq!(project_cone(0.2, -0.3, 0.0, 0.5), (0.2, 0.0));
        assert_eq!(project_cone(-1.5, 0.0, 0.0, 0.5), (-1.0, 0.5));
        // below the vertex
        assert_eq!(project_cone(0.6, -1.0, 0.0, 0.5), (0.5, 0.0));
    }

    #[test]
    fn raw_cone_stays_on_the_cone() {
        for (x, d) in [(24i64, 0i64), (25, 0), (-25, 3), (9, -20), (3, -1), (100, 100)] {
            let (px, pd) = project_cone_raw(x, d, 0, 8);
            assert!(pd >= 0 && px.abs() <= 8 + pd, "{x} {d} -> {px} {pd}");
            let (ex, ed) = project_cone(x as f64, d as f64, 0.0, 8.0);
            assert!((px as f64 - ex).abs() <= 1.0 && (pd as f64 - ed).abs() <= 1.0);
        }
    }

    fn toy_layout() -> Layout {
        // N = 2, nx = 1, nu = 1, ns = 0: z = (u0, u1, x0, x1, x2)
        Layout {
            nx: 1,
            nu: 1,
            ns: 0,
            horizon: 2,
            components: vec![Component::Free; 5],
        }
    }

    #[test]
    fn warm_start_blocks() {
        let lay = toy_layout();
        let z = [1.0, 2.0, 10.0, 11.0, 12.0];
        let (zs, ns) = warm_start_shift(&z, &z, &lay, Padding::Repeat).unwrap();
        assert_eq!(zs, vec![2.0, 2.0, 11.0, 12.0, 12.0]);
        assert_eq!(ns, zs);
        let (zz, _) = warm_start_shift(&z, &z, &lay, Padding::Zero).unwrap();
        assert_eq!(zz, vec![2.0, 0.0, 11.0, 12.0, 0.0]);
        let c = [3.0; 5];
        assert_eq!(warm_start_shift(&c, &c, &lay, Padding::Repeat).unwrap().0, c.to_vec());
        assert!(warm_start_shift(&c[..4], &c[..4], &lay, Padding::Repeat).is_err());
    }
}
