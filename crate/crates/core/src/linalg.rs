//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `(lambda_min, lambda_max)` of the symmetric part of `m`.
pub fn sym_extremes(m: &Mat) -> (f64, f64) {
    let ev = sym_eigenvalues(m);
    (ev[0], ev[ev.len() - 1])
}

/// Largest singular value, from the eigenvalues of the smaller Gram matrix.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let (_, hi) = sym_extremes(&gram);
    hi.max(0.0).sqrt()
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    // scale until the norm is below 1/2
    let squarings = (norm.log2() + 1.0).ceil().max(0.0) as i32;
    let scaled = a / 2f64.powi(squarings);
    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..64 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_matches_closed_forms() {
        let z = Mat::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), Mat::identity(3, 3));
        let s = Mat::from_element(1, 1, -1.0);
        assert!((expm(&s).unwrap()[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
        // rotation generator
        let t = 2.5;
        let r = Mat::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&r).unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-12);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-12);
        assert!(expm(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn norms() {
        let m = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.0, 3.0, 0.0, 1.0]);
        assert_eq!(inf_norm(&m), 4.0);
        let sv = m.clone().svd(false, false).singular_values[0];
        assert!((spectral_norm(&m) - sv).abs() < 1e-12);
        assert!((spectral_norm(&m.transpose()) - sv).abs() < 1e-12);
        let rot = Mat::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&rot) - 0.5).abs() < 1e-12);
    }
}
