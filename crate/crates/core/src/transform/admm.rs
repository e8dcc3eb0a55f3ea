use nalgebra::Cholesky;
use serde::Serialize;

use super::SparseQp;
use crate::error::{Error, Result};
use crate::fxp::{quantize_raw, FxFormat, Rounding};
use crate::linalg::{spectral_norm, sym_eigenvalues, sym_extremes, symmetrize, Mat};

/// Checks recorded while preparing the ADMM data.
#[derive(Debug, Clone, Serialize)]
pub struct AdmmOfflineReport {
    pub rho: f64,
    pub frac_bits: u32,
    /// `|| K [M11; M12'] - [I; 0] ||_inf` before quantization.
    pub kkt_residual: f64,
    /// Smallest eigenvalue of the quantized `M11`.
    pub m11_min_eigenvalue: f64,
    /// `rho * lambda_max` of the quantized `M11`.
    pub rho_lambda_max: f64,
    /// `rho * ||M11||_2` of the quantized `M11`.
    pub rho_norm_m11: f64,
    /// Smallest eigenvalue of `[M11 M12; M12' M22]^-1 - [rho I F'; F 0]`
    /// with quantized `M11, M12, F`.
    pub consistency_min_eigenvalue: f64,
    /// Tolerance applied to the consistency eigenvalue; infinite when the
    /// rounding is too coarse for the perturbation bound to apply.
    pub consistency_tolerance: f64,
    /// `||F_quantized - F||_inf`.
    pub f_quantization_error: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOffline {
    pub rho: f64,
    pub frac_bits: u32,
    pub m11: Mat,
    pub m12: Mat,
    pub m22: Mat,
    /// Quantized `M11`, `M12`, `F` (entries on the `2^-b` grid).
    pub m11_hat: Mat,
    pub m12_hat: Mat,
    pub f_hat: Mat,
    pub report: AdmmOfflineReport,
}

pub fn is_power_of_two(x: f64) -> bool {
    x > 0.0 && x.is_finite() && x == x.log2().round().exp2()
}

fn to_grid(m: &Mat, b: u32) -> Result<Mat> {
    let fmt = FxFormat::new(64 - b, b)?;
    let lsb = fmt.lsb();
    let mut out = m.clone();
    for v in out.iter_mut() {
        *v = quantize_raw(*v, fmt, Rounding::Nearest)? as f64 * lsb;
    }
    Ok(out)
}

/// Blocks of `[H_A + rho I, F'; F, 0]^-1` by block elimination:
/// `Z = H_A + rho I` is positive definite, so with `S = F Z^-1 F'`,
/// `M11 = Z^-1 - Z^-1 F' S^-1 F Z^-1`, `M12 = Z^-1 F' S^-1`, `M22 = -S^-1`.
pub fn kkt_inverse(s: &SparseQp, rho: f64) -> Result<(Mat, Mat, Mat)> {
    let n = s.n();
    let z = &s.h_a + Mat::identity(n, n) * rho;
    let zc = Cholesky::new(symmetrize(&z))
        .ok_or_else(|| Error::SingularKkt("H_A + rho I is not positive definite".into()))?;
    let zi = zc.inverse();
    let zift = &zi * s.f.transpose();
    let schur = symmetrize(&(&s.f * &zift));
    let sc = Cholesky::new(schur)
        .ok_or_else(|| Error::SingularKkt("F does not have full row rank".into()))?;
    let si = sc.inverse();
    let m12 = &zift * &si;
    let m11 = symmetrize(&(&zi - &m12 * zift.transpose()));
    Ok((m11, m12, -si))
}

fn kkt_residual(s: &SparseQp, rho: f64, m11: &Mat, m12: &Mat) -> f64 {
    let n = s.n();
    let top = (&s.h_a + Mat::identity(n, n) * rho) * m11 + s.f.transpose() * m12.transpose() - Mat::identity(n, n);
    let bottom = &s.f * m11;
    top.amax().max(bottom.amax())
}

/// Offline ADMM data at penalty `rho` (a power of two) and `frac_bits`
/// fraction bits.
pub fn precompute_admm(s: &SparseQp, rho: f64, frac_bits: u32) -> Result<AdmmOffline> {
    if !is_power_of_two(rho) {
        return Err(Error::Parameter(format!("rho = {rho} is not a power of two")));
    }
    let b = frac_bits;
    let (m11, m12, m22) = kkt_inverse(s, rho)?;
    let residual = kkt_residual(s, rho, &m11, &m12);
    if residual > 1e-8 {
        return Err(Error::SingularKkt(format!("inverse residual {residual:.2e}")));
    }
    let m11_hat = to_grid(&m11, b)?;
    let m12_hat = to_grid(&m12, b)?;
    let f_hat = to_grid(&s.f, b)?;

    let (lo, hi) = sym_extremes(&m11_hat);
    let rho_lambda_max = rho * hi;
    let rho_norm = rho * spectral_norm(&m11_hat);

    let (n, m) = (s.n(), s.m());
    let block = |a: &Mat, b: &Mat, d: &Mat| {
        let mut out = Mat::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(a);
        out.view_mut((0, n), (n, m)).copy_from(b);
        out.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
        out.view_mut((n, n), (m, m)).copy_from(d);
        out
    };
    let kinv = block(&m11_hat, &m12_hat, &m22);
    let k = kinv
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Assumption("quantized KKT inverse is singular".into()))?;
    let rho_i = Mat::identity(n, n) * rho;
    let base = block(&rho_i, &f_hat.transpose(), &Mat::zeros(m, m));
    let consistency = sym_eigenvalues(&(k - base))[0];
    let kkt = block(&(&s.h_a + &rho_i), &s.f.transpose(), &Mat::zeros(m, m));
    let tol = consistency_tolerance(
        spectral_norm(&kkt),
        spectral_norm(&(kinv - block(&m11, &m12, &m22))),
        spectral_norm(&(&f_hat - &s.f)),
    );

    let report = AdmmOfflineReport {
        rho,
        frac_bits: b,
        kkt_residual: residual,
        m11_min_eigenvalue: lo,
        rho_lambda_max,
        rho_norm_m11: rho_norm,
        consistency_min_eigenvalue: consistency,
        consistency_tolerance: tol,
        f_quantization_error: crate::linalg::inf_norm(&(&f_hat - &s.f)),
    };
    if consistency < -tol {
        return Err(Error::Assumption(format!(
            "quantized KKT inverse is inconsistent at b = {b}: min eigenvalue {consistency:.3e} below -{tol:.1e}"
        )));
    }
    if rho_lambda_max >= 1.0 {
        return Err(Error::Assumption(format!(
            "rho * lambda_max(M11) = {rho_lambda_max} is not below 1 at b = {b}"
        )));
    }
    Ok(AdmmOffline {
        rho,
        frac_bits: b,
        m11,
        m12,
        m22,
        m11_hat,
        m12_hat,
        f_hat,
        report,
    })
}

/// Tolerance on the consistency eigenvalue. The exact matrix is
/// `blkdiag(H_A, 0)`, which is only semidefinite, so any rounding of the
/// inverse can push its smallest eigenvalue below zero. With `kappa` the
/// norm of the KKT matrix, `eps` the norm of the rounding error in its
/// inverse and `df` that in `F`, the perturbation is at most
/// `kappa^2 eps / (1 - kappa eps) + df`.
pub fn consistency_tolerance(kappa: f64, eps: f64, df: f64) -> f64 {
    if kappa * eps >= 1.0 {
        return f64::INFINITY;
    }
    1e-8_f64.max(kappa * kappa * eps / (1.0 - kappa * eps) + df)
}
