//! Overflow bounds, round-off error recurrences and fraction-bit
//! selection for the fixed-point solvers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgm::{FgmFormats, FgmFx};
use crate::fxp::{int_bits_for_bound, FxFormat};
use crate::linalg::{inf_norm, spectral_norm, spectral_radius, sym_eigenvalues, vec_inf_norm, Mat};
use crate::transform::{AdmmOffline, FgmOffline};

/// A-priori magnitude bounds of the FGM signals and the formats they imply.
#[derive(Debug, Clone, Serialize)]
pub struct OverflowReport {
    pub z_bar: f64,
    pub y_bar: f64,
    pub y_inter_bar: f64,
    pub x_bar: f64,
    pub h_bar: f64,
    pub t_bar: f64,
    pub formats: FgmFormats,
}

impl OverflowReport {
    /// `(signal, bound, integer bits)` rows.
    pub fn table(&self) -> Vec<(&'static str, f64, u32)> {
        let f = &self.formats;
        vec![
            ("z", self.z_bar, f.z.int_bits()),
            ("y", self.y_bar, f.y.int_bits()),
            ("y_inter", self.y_inter_bar, f.y_inter.int_bits()),
            ("x", self.x_bar, f.x.int_bits()),
            ("h", self.h_bar, f.h.int_bits()),
            ("t", self.t_bar, f.t.int_bits()),
        ]
    }
}

/// Bounds for the solver `fx` over parameters in the box
/// `[p_lo, p_hi]`. Partial sums of the dot products obey the same bounds
/// since every partial sum is dominated by the sum of absolute terms.
pub fn fgm_overflow_bounds(off: &FgmOffline, fx: &FgmFx, p_lo: &[f64], p_hi: &[f64]) -> Result<OverflowReport> {
    if p_lo.len() != off.phi_n.ncols() || p_hi.len() != p_lo.len() {
        return Err(Error::Dimension("parameter box".into()));
    }
    if p_lo.iter().zip(p_hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
        return Err(Error::Parameter("parameter box must be bounded and nonempty".into()));
    }
    let b = fx.frac_bits;
    let (lo, hi) = fx.bounds();
    let z_bar = vec_inf_norm(&lo).max(vec_inf_norm(&hi));
    let width = lo.iter().zip(&hi).fold(0.0_f64, |a, (l, h)| a.max(h - l));
    let y_bar = z_bar + off.beta * width;
    let y_inter_bar = inf_norm(&off.i_minus_h_n) * y_bar;
    // truncation may move a negative parameter one LSB away from zero
    let x_bar = vec_inf_norm(p_lo).max(vec_inf_norm(p_hi)) + (-(b as f64)).exp2();
    let h_bar = inf_norm(&off.phi_n) * x_bar;
    let t_bar = y_inter_bar + h_bar;
    let f = |v: f64| FxFormat::new(int_bits_for_bound(v), b);
    Ok(OverflowReport {
        z_bar,
        y_bar,
        y_inter_bar,
        x_bar,
        h_bar,
        t_bar,
        formats: FgmFormats {
            z: f(z_bar)?,
            y: f(y_bar)?,
            y_inter: f(y_inter_bar)?,
            x: f(x_bar)?,
            h: f(h_bar)?,
            t: f(t_bar)?,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Fgm,
    Admm,
}

/// Eigen-decomposition of the symmetric block that generates `A` and `B`.
#[derive(Debug, Clone)]
enum Modal {
    /// `A = [[(1+g) C, -g C], [I, 0]]`, `B = [[C, I], [0, 0]]`.
    Momentum { lambdas: Vec<f64>, gamma: f64 },
    /// `A = [[rho M, -(M - I/rho)], [0, 0]]`, `B = I`.
    Splitting { lambdas: Vec<f64>, rho: f64 },
}

/// Linear recurrence `xi+ = A xi + B upsilon` of the accumulated round-off
/// error, observed through `E = [I 0]`.
#[derive(Debug, Clone)]
pub struct ErrorSystem {
    pub kind: SystemKind,
    pub n: usize,
    pub a: Mat,
    pub b: Mat,
    pub spectral_radius: f64,
    modal: Modal,
}

fn block2(a11: &Mat, a12: &Mat, a21: &Mat, a22: &Mat) -> Mat {
    let n = a11.nrows();
    let mut m = Mat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a11);
    m.view_mut((0, n), (n, n)).copy_from(a12);
    m.view_mut((n, 0), (n, n)).copy_from(a21);
    m.view_mut((n, n), (n, n)).copy_from(a22);
    m
}

/// Roots of `z^2 - (1+g) l z + g l`, the eigenvalues of one momentum mode.
fn momentum_radius(l: f64, g: f64) -> f64 {
    let (p, q) = ((1.0 + g) * l, g * l);
    let disc = p * p - 4.0 * q;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((p + s) / 2.0).abs().max(((p - s) / 2.0).abs())
    } else {
        q.abs().sqrt()
    }
}

impl ErrorSystem {
    /// The momentum recurrence for symmetric `c` and momentum `gamma`.
    pub fn momentum(c: &Mat, gamma: f64) -> Self {
        let n = c.nrows();
        let (i, z) = (Mat::identity(n, n), Mat::zeros(n, n));
        let lambdas = sym_eigenvalues(c);
        let radius = lambdas.iter().map(|l| momentum_radius(*l, gamma)).fold(0.0, f64::max);
        ErrorSystem {
            kind: SystemKind::Fgm,
            n,
            a: block2(&(c * (1.0 + gamma)), &(c * -gamma), &i, &z),
            b: block2(c, &i, &z, &z),
            spectral_radius: radius,
            modal: Modal::Momentum { lambdas, gamma },
        }
    }

    /// The splitting recurrence for symmetric `m11` and penalty `rho`.
    pub fn splitting(m11: &Mat, rho: f64) -> Self {
        let n = m11.nrows();
        let (i, z) = (Mat::identity(n, n), Mat::zeros(n, n));
        let lambdas = sym_eigenvalues(m11);
        let radius = lambdas.iter().map(|l| (rho * l).abs()).fold(0.0, f64::max);
        ErrorSystem {
            kind: SystemKind::Admm,
            n,
            a: block2(&(m11 * rho), &-(m11 - &i / rho), &z, &z),
            b: Mat::identity(2 * n, 2 * n),
            spectral_radius: radius,
            modal: Modal::Splitting { lambdas, rho },
        }
    }

    pub fn fgm(off: &FgmOffline) -> Self {
        Self::momentum(&off.i_minus_h_n, off.beta)
    }

    pub fn admm(off: &AdmmOffline) -> Self {
        Self::splitting(&off.m11_hat, off.rho)
    }

    /// Spectral radius from a general eigensolver on `A`.
    pub fn dense_spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// `(||E A^k||, ||E A^k B||)` for `k = 0..count`.
    pub fn power_norms(&self, count: usize) -> (Vec<f64>, Vec<f64>) {
        let mut na = vec![0.0_f64; count];
        let mut nab = vec![0.0_f64; count];
        match &self.modal {
            Modal::Momentum { lambdas, gamma } => {
                for &l in lambdas {
                    // row e1' A^k of the 2x2 mode, then times B = [[l, 1], [0, 0]]
                    let (mut r0, mut r1) = (1.0_f64, 0.0_f64);
                    for k in 0..count {
                        na[k] = na[k].max(r0.hypot(r1));
                        nab[k] = nab[k].max(r0.abs() * l.hypot(1.0));
                        let n0 = r0 * (1.0 + gamma) * l + r1;
                        let n1 = -r0 * gamma * l;
                        r0 = n0;
                        r1 = n1;
                    }
                }
            }
            Modal::Splitting { lambdas, rho } => {
                for &l in lambdas {
                    let (rl, off) = (rho * l, l - 1.0 / rho);
                    let mut p = 1.0_f64;
                    for k in 0..count {
                        let v = if k == 0 { 1.0 } else { (rl * p).hypot(off * p) };
                        if k > 0 {
                            p *= rl;
                        }
                        na[k] = na[k].max(v);
                        nab[k] = nab[k].max(v);
                    }
                }
            }
        }
        (na, nab)
    }

    /// [`Self::power_norms`] by explicit products with `A`.
    pub fn dense_power_norms(&self, count: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut p = Mat::zeros(n, 2 * n);
        p.view_mut((0, 0), (n, n)).fill_diagonal(1.0);
        let mut na = Vec::with_capacity(count);
        let mut nab = Vec::with_capacity(count);
        for _ in 0..count {
            na.push(spectral_norm(&p));
            nab.push(spectral_norm(&(&p * &self.b)));
            p = &p * &self.a;
        }
        (na, nab)
    }
}

/// Stability verdict of an error system.
#[derive(Debug, Clone, Serialize)]
pub struct SchurReport {
    pub stable: bool,
    pub margin: f64,
    /// For the momentum recurrence: whether every mode satisfies the
    /// quadratic root conditions.
    pub root_conditions: Option<bool>,
}

/// Root conditions of `z^2 - (1+g) l z + g l` for one mode.
pub fn root_conditions(l: f64, g: f64) -> [bool; 3] {
    [
        ((1.0 + g) * l).abs() / 2.0 < 1.0,
        (l * g).abs() < 1.0,
        ((1.0 + g) * l).abs() < g * l + 1.0,
    ]
}

pub fn schur_check(sys: &ErrorSystem) -> SchurReport {
    let root = match &sys.modal {
        Modal::Momentum { lambdas, gamma } => {
            Some(lambdas.iter().all(|l| root_conditions(*l, *gamma).iter().all(|c| *c)))
        }
        Modal::Splitting { .. } => None,
    };
    SchurReport {
        stable: sys.spectral_radius < 1.0 - 1e-9,
        margin: 1.0 - sys.spectral_radius,
        root_conditions: root,
    }
}

/// Least-squares fit `eta_bar_{i+1} - eta_bar_i ~ amplitude * ratio^i`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeometricFit {
    pub ratio: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBoundSeries {
    /// Bound on `||z_hat_i - z_i||_2` for `i = 0..=I_max`.
    pub eta_bar: Vec<f64>,
    /// Limit of the series for `eta0 = 0`.
    pub asymptote: f64,
    pub fit: Option<GeometricFit>,
}

/// `2^-b sqrt(n (1 + n^2))`: the per-iteration round-off level.
pub fn noise_level(b: u32, n: usize) -> f64 {
    let n = n as f64;
    (-(b as f64)).exp2() * (n * (1.0 + n * n)).sqrt()
}

const SERIES_CUTOFF: f64 = 1e-15;
const SERIES_MAX_TERMS: usize = 1_000_000;

/// `sum_k ||E A^k B||` until the terms drop below the cutoff.
pub fn series_sum(sys: &ErrorSystem) -> Result<f64> {
    if sys.spectral_radius >= 1.0 {
        return Err(Error::UnstableSystem(sys.spectral_radius));
    }
    let mut count = 256;
    loop {
        let (_, nab) = sys.power_norms(count);
        if nab[count - 1] < SERIES_CUTOFF || count >= SERIES_MAX_TERMS {
            return Ok(nab.iter().take_while(|v| **v >= SERIES_CUTOFF || **v == nab[0]).sum());
        }
        count *= 4;
    }
}

fn fit_geometric(eta: &[f64]) -> Option<GeometricFit> {
    let pts: Vec<(f64, f64)> = eta
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let d = w[1] - w[0];
            (d > 1e-300).then(|| (i as f64, d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    let slope = sxy / sxx;
    Some(GeometricFit {
        ratio: slope.exp(),
        amplitude: (my - slope * mx).exp(),
    })
}

/// The accumulated-error bound for iterations `0..=i_max` with `b`
/// fraction bits, problem size `n` and initial error norm `eta0`.
pub fn eta_bound(sys: &ErrorSystem, b: u32, n: usize, eta0: f64, i_max: usize) -> Result<ErrorBoundSeries> {
    if i_max < 1 {
        return Err(Error::Parameter("i_max must be at least 1".into()));
    }
    let (na, nab) = sys.power_norms(i_max + 1);
    let c = noise_level(b, n);
    let init = std::f64::consts::SQRT_2 * eta0;
    let mut eta_bar = Vec::with_capacity(i_max + 1);
    let mut acc = 0.0;
    for i in 0..=i_max {
        if i > 0 {
            acc += nab[i - 1];
        }
        eta_bar.push(na[i] * init + c * acc);
    }
    let asymptote = match series_sum(sys) {
        Ok(s) => c * s,
        Err(_) => f64::INFINITY,
    };
    let fit = fit_geometric(&eta_bar);
    Ok(ErrorBoundSeries { eta_bar, asymptote, fit })
}

/// Smallest `b` whose asymptotic bound is at most `target`.
pub fn min_fraction_bits(sys: &ErrorSystem, n: usize, target: f64) -> Result<u32> {
    if !(target > 0.0) {
        return Err(Error::Parameter("target accuracy must be positive".into()));
    }
    let s = series_sum(sys)?;
    let level = noise_level(0, n) * s;
    let mut b = (level / target).log2().ceil().max(1.0) as u32;
    while b > 1 && noise_level(b - 1, n) * s <= target {
        b -= 1;
    }
    while noise_level(b, n) * s > target {
        b += 1;
    }
    Ok(b)
}

/// Everything the `certify` command reports for one solver.
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub kind: SystemKind,
    pub frac_bits: u32,
    pub n: usize,
    pub overflow: Option<OverflowReport>,
    pub spectral_radius: f64,
    pub schur: SchurReport,
    pub eta_bar: Vec<f64>,
    pub asymptote: f64,
    pub target_eta: Option<f64>,
    pub recommended_frac_bits: Option<u32>,
}

/// Schur check, round-off series and (for FGM) overflow bounds of one
/// solver. `n` is the vector length entering the noise level, `overflow`
/// the bounds already computed for FGM.
pub fn certify(
    sys: &ErrorSystem,
    frac_bits: u32,
    n: usize,
    i_max: usize,
    overflow: Option<OverflowReport>,
    target_eta: Option<f64>,
) -> Result<CertificationReport> {
    let schur = schur_check(sys);
    let series = eta_bound(sys, frac_bits, n, 0.0, i_max)?;
    let recommended = match target_eta {
        Some(t) if schur.stable => Some(min_fraction_bits(sys, n, t)?),
        _ => None,
    };
    Ok(CertificationReport {
        kind: sys.kind,
        frac_bits,
        n,
        overflow,
        spectral_radius: sys.spectral_radius,
        schur,
        eta_bar: series.eta_bar,
        asymptote: series.asymptote,
        target_eta,
        recommended_frac_bits: recommended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Mat {
        let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = g.qr().q();
        let d = Mat::from_diagonal(&crate::linalg::Vector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
        crate::linalg::symmetrize(&(&q * d * q.transpose()))
    }

    #[test]
    fn trivial_fgm_system() {
        // H_n = I, beta = 0: C = 0
        let sys = ErrorSystem::momentum(&Mat::zeros(1, 1), 0.0);
        assert_eq!(sys.spectral_radius, 0.0);
        assert_eq!(sys.a, Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        let s = eta_bound(&sys, 10, 1, 0.0, 5).unwrap();
        let lvl = std::f64::consts::SQRT_2 * (-10.0_f64).exp2();
        assert_eq!(s.eta_bar[0], 0.0);
        for v in &s.eta_bar[1..] {
            assert!((v - lvl).abs() < 1e-18);
        }
        let s = eta_bound(&sys, 10, 1, 0.25, 3).unwrap();
        assert!((s.eta_bar[0] - std::f64::consts::SQRT_2 * 0.25).abs() < 1e-15);
        assert!((s.eta_bar[1] - lvl).abs() < 1e-15);
        assert_eq!(min_fraction_bits(&sys, 1, 1e-4).unwrap(), 14);
    }

    #[test]
    fn root_condition_example() {
        assert_eq!(root_conditions(0.9, 1.0), [true, true, true]);
        assert!(!root_conditions(1.0, 0.5)[2]);
        let sys = ErrorSystem::momentum(&Mat::identity(2, 2), 0.5);
        let r = schur_check(&sys);
        assert!(!r.stable);
        assert_eq!(r.root_conditions, Some(false));
    }

    #[test]
    fn modal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let c = random_symmetric(&mut rng, 4, 0.0, 0.95);
            let g = rng.gen_range(0.0..1.0);
            let sys = ErrorSystem::momentum(&c, g);
            assert!((sys.spectral_radius - sys.dense_spectral_radius()).abs() < 1e-6);
            let (a, b) = sys.power_norms(12);
            let (da, db) = sys.dense_power_norms(12);
            for k in 0..12 {
                assert!((a[k] - da[k]).abs() < 1e-9 && (b[k] - db[k]).abs() < 1e-9, "k = {k}");
            }
            let m = random_symmetric(&mut rng, 4, 0.0, 0.45);
            let sys = ErrorSystem::splitting(&m, 2.0);
            assert!((sys.spectral_radius - sys.dense_spectral_radius()).abs() < 1e-9);
            let (a, b) = sys.power_norms(8);
            let (da, db) = sys.dense_power_norms(8);
            for k in 0..8 {
                assert!((a[k] - da[k]).abs() < 1e-9 && (b[k] - db[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn roots_agree_with_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let c = random_symmetric(&mut rng, 3, -0.2, 1.2);
            let sys = ErrorSystem::momentum(&c, rng.gen_range(0.0..1.0));
            let r = schur_check(&sys);
            assert_eq!(r.root_conditions, Some(sys.dense_spectral_radius() < 1.0));
        }
    }

    #[test]
    fn bound_converges_and_scales_by_half_per_bit() {
        let sys = ErrorSystem::momentum(&Mat::from_diagonal_element(3, 3, 0.8), 0.6);
        let s = eta_bound(&sys, 12, 3, 0.0, 400).unwrap();
        assert!(s.eta_bar.windows(2).all(|w| w[1] >= w[0] - 1e-18));
        assert!((s.eta_bar[400] - s.asymptote).abs() < 1e-12 * s.asymptote.max(1.0));
        let t = eta_bound(&sys, 13, 3, 0.0, 10).unwrap();
        assert!((t.asymptote * 2.0 - s.asymptote).abs() < 1e-12);
        let b = min_fraction_bits(&sys, 3, s.asymptote).unwrap();
        assert_eq!(b, 12);
        let unstable = ErrorSystem::splitting(&Mat::identity(2, 2), 1.0);
        assert!(matches!(min_fraction_bits(&unstable, 2, 1e-3), Err(Error::UnstableSystem(_))));
    }
}
