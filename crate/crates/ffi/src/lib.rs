//! C interface to the fixmpc solvers and hardware model.
//!
//! Every fallible function returns a [`FixmpcStatus`]; on failure the
//! message is available from [`fixmpc_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fixmpc::admm::{admm_solve, AdmmFormats, AdmmFx};
use fixmpc::certify::fgm_overflow_bounds;
use fixmpc::fgm::{fgm_solve, FgmFormats, FgmFx};
use fixmpc::fxp::{FxFormat, OverflowPolicy};
use fixmpc::hwmodel::{admm_latency, fgm_latency, HwParams};
use fixmpc::model::{parse_problem, validate, MpcProblem, Reference};
use fixmpc::transform::{
    build_sparse, condense, normalize_fgm, normalize_fgm_exact, precompute_admm, scale_soft_constraints, AdmmOffline,
    CondensedQp, FgmOffline, SparseQp,
};
use fixmpc::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Validation = 4,
    Dimension = 5,
    Overflow = 6,
    Precision = 7,
    Assumption = 8,
    Unstable = 9,
    Solver = 10,
    Panic = 11,
}

/// Solver family for [`fixmpc_hw_latency`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixmpcFamily {
    Fgm = 0,
    Admm = 1,
}

/// Latency of one solve on the modeled datapath.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FixmpcLatency {
    pub cycles_per_iter: u64,
    pub total_cycles: u64,
    pub sample_time_s: f64,
}

/// A validated problem.
pub struct FixmpcProblem {
    problem: MpcProblem,
}

/// FGM on the condensed problem, in double or fixed-point arithmetic.
pub struct FixmpcFgm {
    q: CondensedQp,
    off: FgmOffline,
    fx: Option<FgmFx>,
}

/// ADMM on the sparse problem, in double or fixed-point arithmetic.
pub struct FixmpcAdmm {
    s: SparseQp,
    off: AdmmOffline,
    fx: Option<AdmmFx>,
    nu: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FixmpcStatus {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Parameter(_) | Error::InvalidFormat(_) => FixmpcStatus::Config,
        Error::Validation(_) | Error::NotCondensable | Error::Layout(_) => FixmpcStatus::Validation,
        Error::Dimension(_) | Error::FormatMismatch(_) => FixmpcStatus::Dimension,
        Error::Overflow { .. } | Error::Range { .. } => FixmpcStatus::Overflow,
        Error::Precision(_) => FixmpcStatus::Precision,
        Error::Assumption(_) | Error::SingularKkt(_) => FixmpcStatus::Assumption,
        Error::UnstableSystem(_) => FixmpcStatus::Unstable,
        Error::OracleFailure(_) => FixmpcStatus::Solver,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), FixmpcStatus>) -> FixmpcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FixmpcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside fixmpc".into());
            FixmpcStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, FixmpcStatus>;
}

impl<T> OrStatus<T> for fixmpc::Result<T> {
    fn or_status(self) -> Result<T, FixmpcStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn invalid(msg: &str) -> FixmpcStatus {
    set_error(msg.into());
    FixmpcStatus::InvalidArgument
}

fn null(what: &str) -> FixmpcStatus {
    set_error(format!("{what} is null"));
    FixmpcStatus::NullPointer
}

/// `len` values from `p`, or zeros when `p` is null.
unsafe fn slice_or_zero(p: *const f64, len: usize) -> Vec<f64> {
    if p.is_null() {
        vec![0.0; len]
    } else {
        std::slice::from_raw_parts(p, len).to_vec()
    }
}

unsafe fn write_out(v: &[f64], out: *mut f64, out_len: usize) -> Result<(), FixmpcStatus> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if out_len < v.len() {
        return Err(invalid(&format!("output buffer holds {out_len} values, {} needed", v.len())));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn fixmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fixmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a problem document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_problem_from_json(json: *const c_char, out: *mut *mut FixmpcProblem) -> FixmpcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let problem = parse_problem(text).or_status()?;
        validate(&problem).into_result().or_status()?;
        *out = Box::into_raw(Box::new(FixmpcProblem { problem }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`fixmpc_problem_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_problem_free(p: *mut FixmpcProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// State, input and horizon lengths; any output pointer may be null.
///
/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_problem_dims(
    p: *const FixmpcProblem,
    nx: *mut usize,
    nu: *mut usize,
    horizon: *mut usize,
) -> FixmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        for (dst, v) in [(nx, p.problem.nx()), (nu, p.problem.nu()), (horizon, p.problem.horizon)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Builds an FGM solver. `frac_bits == 0` selects double precision;
/// otherwise integer bits follow from the overflow bounds over
/// parameters `(x, x_ref, u_ref)` with `|p_j| <= param_bound`.
///
/// # Safety
/// `p` must be a live problem handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_fgm_new(
    p: *const FixmpcProblem,
    frac_bits: u32,
    param_bound: f64,
    out: *mut *mut FixmpcFgm,
) -> FixmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = condense(&p.problem).or_status()?;
        let solver = if frac_bits == 0 {
            FixmpcFgm {
                off: normalize_fgm_exact(&q),
                q,
                fx: None,
            }
        } else {
            if !(param_bound > 0.0 && param_bound.is_finite()) {
                return Err(invalid("param_bound must be positive and finite"));
            }
            let off = normalize_fgm(&q, frac_bits).or_status()?;
            let wide = FxFormat::new(62u32.saturating_sub(frac_bits), frac_bits).or_status()?;
            let probe = FgmFx::new(&off, &q, FgmFormats::uniform(wide), OverflowPolicy::Checked).or_status()?;
            let np = q.n_param();
            let bounds =
                fgm_overflow_bounds(&off, &probe, &vec![-param_bound; np], &vec![param_bound; np]).or_status()?;
            let fx = FgmFx::new(&off, &q, bounds.formats, OverflowPolicy::Checked).or_status()?;
            FixmpcFgm { q, off, fx: Some(fx) }
        };
        *out = Box::into_raw(Box::new(solver));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`fixmpc_fgm_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_fgm_free(s: *mut FixmpcFgm) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Length `N n_u` of the FGM solution.
///
/// # Safety
/// `s` must be a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_fgm_len(s: *const FixmpcFgm) -> usize {
    s.as_ref().map_or(0, |s| s.q.n())
}

/// Cold-start solve. `x` has `nx` entries; `x_ref` (`nx`) and `u_ref`
/// (`nu`) may be null for zero. Writes the input sequence to `z`.
///
/// # Safety
/// All non-null pointers must reference buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_fgm_solve(
    s: *const FixmpcFgm,
    x: *const f64,
    x_ref: *const f64,
    u_ref: *const f64,
    iters: usize,
    z: *mut f64,
    z_len: usize,
) -> FixmpcStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        let r = Reference {
            x: slice_or_zero(x_ref, s.q.nx),
            u: slice_or_zero(u_ref, s.q.nu),
        };
        let param = s.q.param(std::slice::from_raw_parts(x, s.q.nx), &r);
        let sol = match &s.fx {
            None => fgm_solve(&s.off, &s.q, &param, iters, None).or_status()?.z,
            Some(fx) => fx.solve(&param, iters, None).or_status()?.z,
        };
        write_out(&sol, z, z_len)
    })
}

/// Builds an ADMM solver with penalty `rho`. `frac_bits == 0` selects
/// double precision; otherwise every signal gets `int_bits` integer bits.
/// Soft constraints are rescaled by the problem's `sigma1`.
///
/// # Safety
/// `p` must be a live problem handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_admm_new(
    p: *const FixmpcProblem,
    rho: f64,
    frac_bits: u32,
    int_bits: u32,
    out: *mut *mut FixmpcAdmm,
) -> FixmpcStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let raw = build_sparse(&p.problem).or_status()?;
        let sigma = p.problem.weights.sigma1;
        let s = if p.problem.n_soft() > 0 && sigma > 0.0 {
            scale_soft_constraints(&raw, sigma).or_status()?
        } else {
            raw
        };
        let off = precompute_admm(&s, rho, if frac_bits == 0 { 40 } else { frac_bits }).or_status()?;
        let fx = if frac_bits == 0 {
            None
        } else {
            let f = AdmmFormats::uniform(FxFormat::new(int_bits, frac_bits).or_status()?);
            Some(AdmmFx::new(&off, &s, f, OverflowPolicy::Checked).or_status()?)
        };
        *out = Box::into_raw(Box::new(FixmpcAdmm {
            s,
            off,
            fx,
            nu: p.problem.nu(),
        }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`fixmpc_admm_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_admm_free(s: *mut FixmpcAdmm) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Length `N n_u` of the input sequence returned by [`fixmpc_admm_solve`].
///
/// # Safety
/// `s` must be a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_admm_len(s: *const FixmpcAdmm) -> usize {
    s.as_ref().map_or(0, |s| s.nu * s.s.layout.horizon)
}

/// Cold-start solve; writes the input sequence in original coordinates
/// to `u`. Pointer conventions as in [`fixmpc_fgm_solve`].
///
/// # Safety
/// All non-null pointers must reference buffers of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_admm_solve(
    s: *const FixmpcAdmm,
    x: *const f64,
    x_ref: *const f64,
    u_ref: *const f64,
    iters: usize,
    u: *mut f64,
    u_len: usize,
) -> FixmpcStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        let nx = s.s.layout.nx;
        let r = Reference {
            x: slice_or_zero(x_ref, nx),
            u: slice_or_zero(u_ref, s.nu),
        };
        let x = std::slice::from_raw_parts(x, nx);
        let z = match &s.fx {
            None => admm_solve(&s.off, &s.s, x, &r, iters, None, None).or_status()?.z,
            Some(fx) => {
                let h = s.s.h(&r);
                let bx = s.s.b(x);
                fx.solve(h.as_slice(), bx.as_slice(), iters, None, None).or_status()?.z
            }
        };
        let n_u = s.nu * s.s.layout.horizon;
        write_out(&s.s.unscale(&z)[..n_u], u, u_len)
    })
}

/// Cycle model of one solve with `n` decision variables (`N n_u` for FGM,
/// `n_A` for ADMM), unit adder and multiplier latencies.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixmpc_hw_latency(
    family: FixmpcFamily,
    n: usize,
    p: usize,
    clock_hz: f64,
    iters: u64,
    warm_start: bool,
    out: *mut FixmpcLatency,
) -> FixmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hw = HwParams {
            warm_start,
            ..HwParams::new(p, clock_hz, iters)
        };
        let r = match family {
            FixmpcFamily::Fgm => fgm_latency(n, &hw),
            FixmpcFamily::Admm => admm_latency(n, &hw),
        }
        .or_status()?;
        *out = FixmpcLatency {
            cycles_per_iter: r.cycles_per_iter,
            total_cycles: r.total_cycles,
            sample_time_s: r.sample_time_s,
        };
        Ok(())
    })
}
