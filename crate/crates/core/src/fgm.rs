//! Fast gradient method (constant step scheme II) for the box-constrained
//! condensed problem, in double precision and in bit-accurate fixed point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{fit, mul_trunc_raw, quantize_raw, FxFormat, OverflowPolicy, Rounding};
use crate::linalg::{Mat, Vector};
use crate::transform::{CondensedQp, FgmOffline};

/// Componentwise clamp onto `[lo, hi]`.
pub fn project_box(t: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, h))| v.max(*l).min(*h))
        .collect()
}

/// Iterates `z_0, .., z_I` of a run.
#[derive(Debug, Clone)]
pub struct FgmRun {
    pub z: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
}

/// The recursion on normalized data: `t = M y - lin`, `z+ = P(t)`,
/// `y+ = (1 + beta) z+ - beta z`.
pub fn fgm_iterate(m: &Mat, lin: &[f64], beta: f64, lo: &[f64], hi: &[f64], iters: usize, z0: &[f64]) -> FgmRun {
    let lin = Vector::from_column_slice(lin);
    let mut z = project_box(z0, lo, hi);
    let mut y = Vector::from_column_slice(&z);
    let mut iterates = Vec::with_capacity(iters + 1);
    iterates.push(z.clone());
    for _ in 0..iters {
        let t = m * &y - &lin;
        let zn = project_box(t.as_slice(), lo, hi);
        for j in 0..zn.len() {
            y[j] = (1.0 + beta) * zn[j] - beta * z[j];
        }
        z = zn;
        iterates.push(z.clone());
    }
    FgmRun { z, iterates }
}

/// Double-precision solve at parameter `(x, x_ref, u_ref)`; cold start at
/// the projection of 0 unless `z0` is given.
pub fn fgm_solve(off: &FgmOffline, q: &CondensedQp, param: &[f64], iters: usize, z0: Option<&[f64]>) -> Result<FgmRun> {
    if param.len() != q.n_param() {
        return Err(Error::Dimension(format!(
            "parameter of length {}, expected {}",
            param.len(),
            q.n_param()
        )));
    }
    let lin = &off.phi_n * Vector::from_column_slice(param);
    let zeros = vec![0.0; q.n()];
    let z0 = z0.unwrap_or(&zeros);
    if z0.len() != q.n() {
        return Err(Error::Dimension("initial iterate".into()));
    }
    Ok(fgm_iterate(&off.i_minus_h_n, lin.as_slice(), off.beta, &q.z_min, &q.z_max, iters, z0))
}

/// `f(z_i) - f*` in the original (unnormalized) objective.
pub fn objective_residuals(q: &CondensedQp, param: &[f64], run: &FgmRun, f_star: f64) -> Vec<f64> {
    let lin = q.phi_ext() * Vector::from_column_slice(param);
    run.iterates.iter().map(|z| q.objective(z, &lin) - f_star).collect()
}

/// Rate factor `min{(1 - 1/sqrt(kappa))^i, 4 kappa / (2 sqrt(kappa) + i)^2}`.
pub fn envelope(kappa_n: f64, i: usize) -> f64 {
    let sk = kappa_n.sqrt();
    let lin = (1.0 - 1.0 / sk).max(0.0).powi(i as i32);
    let sub = 4.0 * kappa_n / (2.0 * sk + i as f64).powi(2);
    lin.min(sub)
}

/// Smallest `i` with `envelope(kappa_n, i) * 2 delta0 <= eps`.
pub fn iteration_bound(kappa_n: f64, delta0: f64, eps: f64) -> Result<usize> {
    if !(kappa_n >= 1.0) || !(delta0 > 0.0) || !(eps > 0.0) {
        return Err(Error::Parameter(format!(
            "iteration bound needs kappa >= 1, delta0 > 0, eps > 0 (got {kappa_n}, {delta0}, {eps})"
        )));
    }
    // the sublinear branch alone reaches eps by this index
    let cap = ((8.0 * kappa_n * delta0 / eps).sqrt() - 2.0 * kappa_n.sqrt()).max(0.0).ceil() as usize + 1;
    Ok((0..=cap)
        .find(|&i| envelope(kappa_n, i) * 2.0 * delta0 <= eps)
        .unwrap_or(cap))
}

/// Shifts a stage-blocked vector one stage forward and repeats the last
/// block.
pub fn shift_blocks(v: &[f64], block: usize) -> Result<Vec<f64>> {
    if block == 0 || v.len() % block != 0 || v.is_empty() {
        return Err(Error::Layout(format!("length {} is not a multiple of {block}", v.len())));
    }
    let mut out = v[block..].to_vec();
    out.extend_from_slice(&v[v.len() - block..]);
    Ok(out)
}

/// Per-signal formats of the fixed-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgmFormats {
    pub z: FxFormat,
    pub y: FxFormat,
    /// Partial sums of `(I - H_n) y`.
    pub y_inter: FxFormat,
    pub x: FxFormat,
    /// `Phi_n x` and its partial sums.
    pub h: FxFormat,
    pub t: FxFormat,
}

impl FgmFormats {
    pub fn uniform(fmt: FxFormat) -> Self {
        FgmFormats {
            z: fmt,
            y: fmt,
            y_inter: fmt,
            x: fmt,
            h: fmt,
            t: fmt,
        }
    }

    fn all(&self) -> [FxFormat; 6] {
        [self.z, self.y, self.y_inter, self.x, self.h, self.t]
    }

    /// Every signal with `bits` fewer integer bits (at least 1).
    pub fn reduced(&self, bits: u32) -> Result<Self> {
        let r = |f: FxFormat| f.with_int_bits(f.int_bits().saturating_sub(bits).max(1));
        Ok(FgmFormats {
            z: r(self.z)?,
            y: r(self.y)?,
            y_inter: r(self.y_inter)?,
            x: r(self.x)?,
            h: r(self.h)?,
            t: r(self.t)?,
        })
    }
}

/// Largest magnitudes seen per signal, partial sums included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FgmMaxima {
    pub z: f64,
    pub y: f64,
    pub y_inter: f64,
    pub x: f64,
    pub h: f64,
    pub t: f64,
}

impl FgmMaxima {
    pub fn merge(&mut self, o: &FgmMaxima) {
        self.z = self.z.max(o.z);
        self.y = self.y.max(o.y);
        self.y_inter = self.y_inter.max(o.y_inter);
        self.x = self.x.max(o.x);
        self.h = self.h.max(o.h);
        self.t = self.t.max(o.t);
    }
}

/// Fixed-point solver data: all matrices and bounds as raw integers with
/// `b` fraction bits.
#[derive(Debug, Clone)]
pub struct FgmFx {
    pub frac_bits: u32,
    pub formats: FgmFormats,
    pub policy: OverflowPolicy,
    n: usize,
    np: usize,
    m: Vec<i64>,
    phi: Vec<i64>,
    beta: i64,
    one_plus_beta: i64,
    lo: Vec<i64>,
    hi: Vec<i64>,
    m_f64: Mat,
    beta_f64: f64,
}

#[derive(Debug, Clone)]
pub struct FgmFxRun {
    pub z: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    /// Quantized parameter.
    pub param: Vec<f64>,
    /// Cached `Phi_n x` as computed in fixed point.
    pub h: Vec<f64>,
    pub maxima: FgmMaxima,
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
    peak: &mut i64,
) -> Result<i64> {
    let mut s: i64 = 0;
    for (&a, &b) in row.iter().zip(col) {
        if a == 0 || b == 0 {
            continue;
        }
        s = fit(s as i128 + mul_trunc_raw(a, b, frac), acc, policy, signal)?;
        *peak = (*peak).max(s.unsigned_abs() as i64);
    }
    Ok(s)
}

impl FgmFx {
    /// `off` must come from [`crate::transform::normalize_fgm`] with the
    /// same number of fraction bits as `formats`. The box is quantized
    /// inward.
    pub fn new(off: &FgmOffline, q: &CondensedQp, formats: FgmFormats, policy: OverflowPolicy) -> Result<Self> {
        let b = off
            .frac_bits
            .ok_or_else(|| Error::Parameter("fixed-point solver needs quantized offline data".into()))?;
        if formats.all().iter().any(|f| f.frac_bits() != b) {
            return Err(Error::FormatMismatch(format!("signal formats must all have {b} fraction bits")));
        }
        let wide = FxFormat::new(64 - b, b)?;
        let lo = q
            .z_min
            .iter()
            .map(|v| quantize_raw(*v, wide, Rounding::Ceil))
            .collect::<Result<Vec<_>>>()?;
        let hi = q
            .z_max
            .iter()
            .map(|v| quantize_raw(*v, wide, Rounding::Truncate))
            .collect::<Result<Vec<_>>>()?;
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Precision(format!("input box is empty at b = {b}")));
        }
        let beta = quantize_raw(off.beta, wide, Rounding::Nearest)?;
        Ok(FgmFx {
            frac_bits: b,
            formats,
            policy,
            n: q.n(),
            np: q.n_param(),
            m: raw_matrix(&off.i_minus_h_n, b)?,
            phi: raw_matrix(&off.phi_n, b)?,
            beta,
            one_plus_beta: beta + (1i64 << b),
            lo,
            hi,
            m_f64: off.i_minus_h_n.clone(),
            beta_f64: off.beta,
        })
    }

    fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// The quantized box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.lsb();
        (
            self.lo.iter().map(|v| *v as f64 * l).collect(),
            self.hi.iter().map(|v| *v as f64 * l).collect(),
        )
    }

    fn to_f64(&self, raw: &[i64]) -> Vec<f64> {
        let l = self.lsb();
        raw.iter().map(|v| *v as f64 * l).collect()
    }

    fn initial(&self, z0: Option<&[f64]>) -> Result<Vec<i64>> {
        let wide = FxFormat::new(64 - self.frac_bits, self.frac_bits)?;
        let mut z = vec![0i64; self.n];
        if let Some(z0) = z0 {
            if z0.len() != self.n {
                return Err(Error::Dimension("initial iterate".into()));
            }
            for (j, v) in z0.iter().enumerate() {
                z[j] = quantize_raw(*v, wide, Rounding::Nearest)?;
            }
        }
        for j in 0..self.n {
            z[j] = z[j].clamp(self.lo[j], self.hi[j]);
        }
        Ok(z)
    }

    pub fn solve(&self, param: &[f64], iters: usize, z0: Option<&[f64]>) -> Result<FgmFxRun> {
        if param.len() != self.np {
            return Err(Error::Dimension(format!("parameter of length {}, expected {}", param.len(), self.np)));
        }
        let (b, f, pol) = (self.frac_bits, &self.formats, self.policy);
        let mut mx = [0i64; 6];
        let p = param
            .iter()
            .map(|v| quantize_raw(*v, f.x, Rounding::Truncate))
            .collect::<Result<Vec<_>>>()?;
        mx[3] = p.iter().map(|v| v.unsigned_abs() as i64).max().unwrap_or(0);
        let mut h = vec![0i64; self.n];
        for (r, hr) in h.iter_mut().enumerate() {
            *hr = dot_track(&self.phi[r * self.np..(r + 1) * self.np], &p, b, f.h, pol, "h", &mut mx[4])?;
        }

        let mut z = self.initial(z0)?;
        let mut y = z.clone();
        let mut zn = vec![0i64; self.n];
        let mut iterates = Vec::with_capacity(iters + 1);
        iterates.push(self.to_f64(&z));
        for _ in 0..iters {
            for r in 0..self.n {
                let my = dot_track(&self.m[r * self.n..(r + 1) * self.n], &y, b, f.y_inter, pol, "y_inter", &mut mx[2])?;
                let t = fit(my as i128 - h[r] as i128, f.t, pol, "t")?;
                mx[5] = mx[5].max(t.unsigned_abs() as i64);
                zn[r] = fit(t.clamp(self.lo[r], self.hi[r]) as i128, f.z, pol, "z")?;
            }
            for r in 0..self.n {
                let a = fit(mul_trunc_raw(self.one_plus_beta, zn[r], b), f.y, pol, "y")?;
                let c = fit(mul_trunc_raw(self.beta, z[r], b), f.y, pol, "y")?;
                y[r] = fit(a as i128 - c as i128, f.y, pol, "y")?;
                mx[1] = mx[1].max(y[r].unsigned_abs() as i64);
                mx[0] = mx[0].max(zn[r].unsigned_abs() as i64);
            }
            std::mem::swap(&mut z, &mut zn);
            iterates.push(self.to_f64(&z));
        }
        let l = self.lsb();
        Ok(FgmFxRun {
            z: self.to_f64(&z),
            iterates,
            param: self.to_f64(&p),
            h: self.to_f64(&h),
            maxima: FgmMaxima {
                z: mx[0] as f64 * l,
                y: mx[1] as f64 * l,
                y_inter: mx[2] as f64 * l,
                x: mx[3] as f64 * l,
                h: mx[4] as f64 * l,
                t: mx[5] as f64 * l,
            },
        })
    }

    /// Exact-arithmetic run on the same quantized data, box, initial
    /// iterate and cached linear term as `run`.
    pub fn twin(&self, run: &FgmFxRun, iters: usize) -> FgmRun {
        let (lo, hi) = self.bounds();
        fgm_iterate(&self.m_f64, &run.h, self.beta_f64, &lo, &hi, iters, &run.iterates[0])
    }
}

/// One row of the exported FGM trace.
#[derive(Debug, Clone, Serialize)]
pub struct FgmTraceRow {
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
    pub eta_observed: f64,
    pub eta_bound: f64,
}

pub fn write_trace<W: Write, R: Serialize>(w: W, rows: &[R]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
