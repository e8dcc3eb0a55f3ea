use serde::Serialize;

use super::CondensedQp;
use crate::error::{Error, Result};
use crate::fxp::{quantize_raw, FxFormat, Rounding};
use crate::linalg::{sym_extremes, Mat};

/// Normalized fast gradient data. With `frac_bits = Some(b)` every matrix
/// entry and `beta` lie on the `2^-b` grid.
#[derive(Debug, Clone, Serialize)]
pub struct FgmOffline {
    pub frac_bits: Option<u32>,
    #[serde(skip)]
    pub h_n: Mat,
    #[serde(skip)]
    pub i_minus_h_n: Mat,
    /// Normalized `[Phi, Phi_ref]`.
    #[serde(skip)]
    pub phi_n: Mat,
    pub beta: f64,
    pub c: f64,
    /// `1 / (c * lambda_max(H_F quantized))`.
    pub scale: f64,
    pub kappa_n: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

fn to_grid(m: &Mat, b: u32, mode: Rounding) -> Result<Mat> {
    // a generous integer part; only the grid matters here
    let fmt = FxFormat::new(64 - b, b)?;
    let lsb = fmt.lsb();
    let mut out = m.clone();
    for v in out.iter_mut() {
        *v = quantize_raw(*v, fmt, mode)? as f64 * lsb;
    }
    Ok(out)
}

fn grid_scalar(x: f64, b: u32, mode: Rounding) -> Result<f64> {
    let fmt = FxFormat::new(64 - b, b)?;
    Ok(quantize_raw(x, fmt, mode)? as f64 * fmt.lsb())
}

/// Step-size for the normalized problem, whose step is 1 and whose
/// convexity parameter is `lambda_min`; `kappa = 1 / lambda_min` bounds the
/// true condition number from above because `lambda_max <= 1`.
fn beta_for(lambda_min: f64) -> f64 {
    let sk = (1.0 / lambda_min).sqrt();
    (sk - 1.0) / (sk + 1.0)
}

/// Exact-arithmetic normalization `H_n = H_F / lambda_max(H_F)`.
pub fn normalize_fgm_exact(q: &CondensedQp) -> FgmOffline {
    let scale = 1.0 / q.l;
    let h_n = &q.h * scale;
    let (lo, hi) = sym_extremes(&h_n);
    let beta = beta_for(lo);
    FgmOffline {
        frac_bits: None,
        i_minus_h_n: Mat::identity(q.n(), q.n()) - &h_n,
        h_n,
        phi_n: q.phi_ext() * scale,
        beta,
        c: 1.0,
        scale,
        kappa_n: ((1.0 + beta) / (1.0 - beta)).powi(2),
        lambda_min: lo,
        lambda_max: hi,
    }
}

/// Fixed-point normalization: picks the smallest `c = 1 + k 2^-b` for which
/// the quantized `H_n` has its spectrum in `(0, 1]`, then rounds `beta` up
/// to the grid.
pub fn normalize_fgm(q: &CondensedQp, frac_bits: u32) -> Result<FgmOffline> {
    let b = frac_bits;
    let h_hat = to_grid(&q.h, b, Rounding::Nearest)?;
    let (_, lmax_hat) = sym_extremes(&h_hat);
    if !(lmax_hat > 0.0) {
        return Err(Error::Precision(format!("quantized Hessian vanishes at b = {b}")));
    }
    let lsb = (-(b as f64)).exp2();
    let steps = 1u64 << b.min(62);
    let mut k: u64 = 0;
    let found = loop {
        let c = 1.0 + k as f64 * lsb;
        if c > 2.0 {
            break None;
        }
        let h_n = to_grid(&(&h_hat / (c * lmax_hat)), b, Rounding::Nearest)?;
        let (lo, hi) = sym_extremes(&h_n);
        if lo > 0.0 && hi <= 1.0 {
            break Some((c, h_n, lo, hi));
        }
        if lo <= 0.0 {
            // a larger c only shrinks the spectrum further
            break None;
        }
        // linear search first, then geometric steps on the same grid
        k = if k < 64 { k + 1 } else { (2 * k).min(steps) };
    };
    let (c, h_n, lo, hi) = found.ok_or_else(|| {
        Error::Precision(format!(
            "no c in [1, 2] puts the quantized normalized Hessian spectrum in (0, 1] at b = {b}"
        ))
    })?;
    let scale = 1.0 / (c * lmax_hat);
    let beta = grid_scalar(beta_for(lo), b, Rounding::Ceil)?;
    if beta >= 1.0 {
        return Err(Error::Precision(format!("step size rounds to 1 at b = {b}")));
    }
    Ok(FgmOffline {
        frac_bits: Some(b),
        i_minus_h_n: Mat::identity(q.n(), q.n()) - &h_n,
        h_n,
        phi_n: to_grid(&(q.phi_ext() * scale), b, Rounding::Nearest)?,
        beta,
        c,
        scale,
        kappa_n: ((1.0 + beta) / (1.0 - beta)).powi(2),
        lambda_min: lo,
        lambda_max: hi,
    })
}
