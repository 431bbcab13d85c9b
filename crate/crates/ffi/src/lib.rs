//! C ABI over `kanlab`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `_free`. Every fallible call returns a [`KanlabStatus`] and, on
//! failure, leaves a message readable through [`kanlab_last_error_message`]
//! on the calling thread.

use kanlab::basins::{classify, ClassifyParams, Label};
use kanlab::central::{sigma_bisect, SigmaParams};
use kanlab::config::SystemSpec;
use kanlab::exponents::boundary_exponent;
use kanlab::ruelle::{solve_equilibrium, EquilibriumState, GridMeasure, DEFAULT_MAX_ITER, DEFAULT_TOL};
use kanlab::skew::BaseOrbit;
use kanlab::{KanError, KanSystem, TrigPoly};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KanlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Config = 4,
    Numerical = 5,
    Undecided = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KanlabLabel {
    Basin0 = 0,
    Basin1 = 1,
    Undecided = 2,
}

/// Opaque skew-product system.
pub struct KanlabSystem {
    inner: KanSystem,
}

/// Opaque equilibrium state of the base map.
pub struct KanlabEquilibrium {
    inner: EquilibriumState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &KanError) -> KanlabStatus {
    match e {
        KanError::InvalidParameter(_) => KanlabStatus::InvalidArgument,
        KanError::Config(_) | KanError::Json(_) => KanlabStatus::Config,
        KanError::Undecided(_) => KanlabStatus::Undecided,
        _ => KanlabStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), KanlabStatus>) -> KanlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KanlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            KanlabStatus::Panic
        }
    }
}

fn fail(e: KanError) -> KanlabStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> KanlabStatus {
    set_error(format!("{what} is null"));
    KanlabStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, KanlabStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        KanlabStatus::InvalidUtf8
    })
}

unsafe fn sys_arg<'a>(p: *const KanlabSystem) -> Result<&'a KanSystem, KanlabStatus> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("system"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], KanlabStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty if none. Valid until the next failure.
#[no_mangle]
pub extern "C" fn kanlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kanlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a builtin system, e.g. `"kan1994"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kanlab_system_new_builtin(name: *const c_char, out: *mut *mut KanlabSystem) -> KanlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        let sys = SystemSpec::builtin(name).build().map_err(fail)?;
        *out = Box::into_raw(Box::new(KanlabSystem { inner: sys }));
        Ok(())
    })
}

/// Create a system from a JSON system block.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kanlab_system_from_json(json: *const c_char, out: *mut *mut KanlabSystem) -> KanlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let sys = SystemSpec::from_json(text).and_then(|s| s.build()).map_err(fail)?;
        *out = Box::into_raw(Box::new(KanlabSystem { inner: sys }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from a `kanlab_system_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kanlab_system_free(sys: *mut KanlabSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// One application of `K`, with invariance checked.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kanlab_system_step(
    sys: *const KanlabSystem,
    theta: f64,
    t: f64,
    out_theta: *mut f64,
    out_t: *mut f64,
) -> KanlabStatus {
    guard(|| {
        let s = sys_arg(sys)?;
        if out_theta.is_null() || out_t.is_null() {
            return Err(null("output"));
        }
        let (a, b) = s.step(theta, t).map_err(fail)?;
        *out_theta = a;
        *out_t = b;
        Ok(())
    })
}

/// Finite-time basin label of `(theta, t)`; `out_time` is -1 when undecided.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kanlab_classify(
    sys: *const KanlabSystem,
    theta: f64,
    t: f64,
    n_max: usize,
    delta: f64,
    window: usize,
    out_label: *mut KanlabLabel,
    out_time: *mut i64,
) -> KanlabStatus {
    guard(|| {
        let s = sys_arg(sys)?;
        if out_label.is_null() || out_time.is_null() {
            return Err(null("output"));
        }
        let params = ClassifyParams { n_max, delta, window };
        params.validate().map_err(fail)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(fail(KanError::InvalidParameter(format!("t = {t} outside [0, 1]"))));
        }
        let c = classify(s, (theta, t), &params);
        *out_label = match c.label {
            Label::Basin0 => KanlabLabel::Basin0,
            Label::Basin1 => KanlabLabel::Basin1,
            Label::Undecided => KanlabLabel::Undecided,
        };
        *out_time = c.time.map_or(-1, |x| x as i64);
        Ok(())
    })
}

/// `∫ log|∂_t φ(θ, j)| dθ` by the midpoint rule on `grid` cells, `j ∈ {0, 1}`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kanlab_boundary_exponent(
    sys: *const KanlabSystem,
    j: u8,
    grid: usize,
    out: *mut f64,
) -> KanlabStatus {
    guard(|| {
        let s = sys_arg(sys)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if grid == 0 {
            return Err(fail(KanError::InvalidParameter("grid must be positive".into())));
        }
        *out = boundary_exponent(s, j, &GridMeasure::lebesgue(grid)).map_err(fail)?;
        Ok(())
    })
}

/// Bisected basin boundary on the fiber over `theta`; NaN if a probe stays undecided.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kanlab_sigma(
    sys: *const KanlabSystem,
    theta: f64,
    n_max: usize,
    tol: f64,
    out: *mut f64,
) -> KanlabStatus {
    guard(|| {
        let s = sys_arg(sys)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(tol > 0.0) {
            return Err(fail(KanError::InvalidParameter("tol must be positive".into())));
        }
        let mut params = SigmaParams::default();
        params.classify.n_max = n_max;
        params.tol = tol;
        let r = sigma_bisect(s, &BaseOrbit::Float(theta), &params).map_err(fail)?;
        *out = r.sigma.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Equilibrium state of the base for `φ = Σ cos[m]·cos(2πmθ) + Σ sin[m−1]·sin(2πmθ)`.
///
/// # Safety
/// `cos`/`sin` must point to `n_cos`/`n_sin` doubles (may be null when the length is 0).
#[no_mangle]
pub unsafe extern "C" fn kanlab_equilibrium_solve(
    sys: *const KanlabSystem,
    cos: *const f64,
    n_cos: usize,
    sin: *const f64,
    n_sin: usize,
    grid: usize,
    out: *mut *mut KanlabEquilibrium,
) -> KanlabStatus {
    guard(|| {
        let s = sys_arg(sys)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let phi = TrigPoly::new(
            slice_arg(cos, n_cos, "cos")?.to_vec(),
            slice_arg(sin, n_sin, "sin")?.to_vec(),
        );
        let st = solve_equilibrium(s.base(), &phi, grid, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(fail)?;
        *out = Box::into_raw(Box::new(KanlabEquilibrium { inner: st }));
        Ok(())
    })
}

/// # Safety
/// `eq` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kanlab_equilibrium_pressure(eq: *const KanlabEquilibrium, out: *mut f64) -> KanlabStatus {
    guard(|| {
        let e = eq.as_ref().ok_or_else(|| null("equilibrium"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = e.inner.pressure;
        Ok(())
    })
}

/// Grid size of the state, or 0 for a null handle.
///
/// # Safety
/// `eq` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn kanlab_equilibrium_grid(eq: *const KanlabEquilibrium) -> usize {
    eq.as_ref().map_or(0, |e| e.inner.grid)
}

/// Copy the invariant weights into `buf` (`len` must equal the grid size).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kanlab_equilibrium_weights(
    eq: *const KanlabEquilibrium,
    buf: *mut f64,
    len: usize,
) -> KanlabStatus {
    guard(|| {
        let e = eq.as_ref().ok_or_else(|| null("equilibrium"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let w = e.inner.measure.weights();
        if len != w.len() {
            return Err(fail(KanError::InvalidParameter(format!(
                "buffer holds {len} values, grid is {}",
                w.len()
            ))));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `eq` must come from `kanlab_equilibrium_solve` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kanlab_equilibrium_free(eq: *mut KanlabEquilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}
