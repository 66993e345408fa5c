//! C ABI for `sphmod`.
//!
//! Every fallible call returns an `int32_t` status (`SPHMOD_OK` on success)
//! and writes results through out-pointers. The message of the last failure
//! on the calling thread is available from [`sphmod_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sphmod::core_math::{eta, gegenbauer, smoothed_kernel_kn, GegenbauerParams};
use sphmod::error::Error;
use sphmod::rates::{run_example_with, ExampleId, ExampleRun, ExampleSpec};
use sphmod::verify::{run_suite, SuiteOptions};

pub const SPHMOD_OK: i32 = 0;
pub const SPHMOD_ERR_NULL: i32 = 1;
pub const SPHMOD_ERR_INVALID: i32 = 2;
pub const SPHMOD_ERR_DOMAIN: i32 = 3;
pub const SPHMOD_ERR_UNSUPPORTED: i32 = 4;
pub const SPHMOD_ERR_NUMERICAL: i32 = 5;
pub const SPHMOD_ERR_PANIC: i32 = 6;

/// An example specification under construction.
pub struct SphmodExample {
    spec: ExampleSpec,
}

/// A computed rate curve with its fit.
pub struct SphmodRun {
    run: ExampleRun,
}

/// Fit summary of a [`SphmodRun`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SphmodFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_rel_residual: f64,
    pub expected_exponent: f64,
    /// Nonzero when the expected law carries a logarithmic factor.
    pub log_factor: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::DegeneratePlane(_) => SPHMOD_ERR_DOMAIN,
        Error::UnsupportedDimension(_) | Error::Unsupported(_) => SPHMOD_ERR_UNSUPPORTED,
        Error::Numerical(_) | Error::NonFinite { .. } => SPHMOD_ERR_NUMERICAL,
        Error::InvalidArgument(_) => SPHMOD_ERR_INVALID,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SPHMOD_OK,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            SPHMOD_ERR_NULL
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            code(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SPHMOD_ERR_PANIC
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn example<'a>(p: *mut SphmodExample) -> Result<&'a mut ExampleSpec, Fail> {
    Ok(&mut out(p, "example")?.spec)
}

/// Message of the last failure on this thread; valid until the next call
/// on the same thread. Never null.
#[no_mangle]
pub extern "C" fn sphmod_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sphmod_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The smooth cutoff `η(x)`.
#[no_mangle]
pub extern "C" fn sphmod_eta(x: f64) -> f64 {
    eta(x)
}

/// `C_n^λ(t)`.
///
/// # Safety
/// `value` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_gegenbauer(n: usize, lambda: f64, t: f64, value: *mut f64) -> i32 {
    guard(|| {
        let v = out(value, "value")?;
        *v = gegenbauer(GegenbauerParams::new(n, lambda)?, t)?;
        Ok(())
    })
}

/// The smoothed zonal kernel `K_n(t)` on `S^{d-1}`.
///
/// # Safety
/// `value` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_smoothed_kernel(n: usize, d: usize, t: f64, value: *mut f64) -> i32 {
    guard(|| {
        let v = out(value, "value")?;
        *v = smoothed_kernel_kn(n, d, t)?;
        Ok(())
    })
}

/// Creates an example with default parameters from its id (`"S2"`, `"E5"`, ...).
///
/// # Safety
/// `id` must be null or a NUL-terminated string; `handle` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_new(id: *const c_char, handle: *mut *mut SphmodExample) -> i32 {
    guard(|| {
        let slot = out(handle, "handle")?;
        if id.is_null() {
            return Err(Fail::Null("id"));
        }
        let s = CStr::from_ptr(id).to_str().map_err(|_| Error::InvalidArgument("id is not UTF-8".into()))?;
        let id: ExampleId = s.parse()?;
        *slot = Box::into_raw(Box::new(SphmodExample { spec: ExampleSpec::new(id) }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`sphmod_example_new`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_free(handle: *mut SphmodExample) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Sets dimension, exponent `p`, smoothness order `r`, exponent `α` and weight `μ`.
///
/// # Safety
/// `handle` must be null or a live example handle.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_set_params(
    handle: *mut SphmodExample,
    d: usize,
    p: f64,
    r: usize,
    alpha: f64,
    mu: f64,
) -> i32 {
    guard(|| {
        let s = example(handle)?;
        s.d = d;
        s.p = p;
        s.r = r;
        s.alpha = alpha;
        s.mu = mu;
        Ok(())
    })
}

/// Sets the geometric grid of `steps` scales from `tmax` down to `tmin`.
///
/// # Safety
/// `handle` must be null or a live example handle.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_set_t_grid(
    handle: *mut SphmodExample,
    tmin: f64,
    tmax: f64,
    steps: usize,
) -> i32 {
    guard(|| {
        let s = example(handle)?;
        s.tmin = tmin;
        s.tmax = tmax;
        s.tsteps = steps;
        Ok(())
    })
}

/// Sets the degrees sampled by the best-approximation examples.
///
/// # Safety
/// `handle` must be null or a live example handle; `degrees` must point to
/// `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_set_degrees(
    handle: *mut SphmodExample,
    degrees: *const usize,
    len: usize,
) -> i32 {
    guard(|| {
        let s = example(handle)?;
        if degrees.is_null() {
            return Err(Fail::Null("degrees"));
        }
        s.ns = std::slice::from_raw_parts(degrees, len).to_vec();
        Ok(())
    })
}

/// Validates the example without computing anything.
///
/// # Safety
/// `handle` must be null or a live example handle.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_validate(handle: *mut SphmodExample) -> i32 {
    guard(|| Ok(example(handle)?.validate()?))
}

/// Samples and fits the example's curve.
///
/// # Safety
/// `handle` must be null or a live example handle; `run` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_example_run(handle: *mut SphmodExample, run: *mut *mut SphmodRun) -> i32 {
    guard(|| {
        let s = example(handle)?;
        let slot = out(run, "run")?;
        let r = run_example_with(s, false)?;
        *slot = Box::into_raw(Box::new(SphmodRun { run: r }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from [`sphmod_example_run`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn sphmod_run_free(run: *mut SphmodRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of samples in the curve.
///
/// # Safety
/// `run` must be null or a live run handle; `len` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_run_len(run: *const SphmodRun, len: *mut usize) -> i32 {
    guard(|| {
        let r = run.as_ref().ok_or(Fail::Null("run"))?;
        *out(len, "len")? = r.run.curve.samples.len();
        Ok(())
    })
}

/// Copies up to `cap` samples: scales (`t` or `n`) to `xs`, values to `values`.
///
/// # Safety
/// `run` must be null or a live run handle; `xs` and `values` must be valid
/// for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_run_samples(run: *const SphmodRun, xs: *mut f64, values: *mut f64, cap: usize) -> i32 {
    guard(|| {
        let r = run.as_ref().ok_or(Fail::Null("run"))?;
        if xs.is_null() || values.is_null() {
            return Err(Fail::Null("xs/values"));
        }
        for (k, (x, v)) in r.run.curve.samples.iter().take(cap).enumerate() {
            *xs.add(k) = *x;
            *values.add(k) = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live run handle; `fit` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_run_fit(run: *const SphmodRun, fit: *mut SphmodFit) -> i32 {
    guard(|| {
        let r = &run.as_ref().ok_or(Fail::Null("run"))?.run;
        *out(fit, "fit")? = SphmodFit {
            slope: r.fit.slope,
            intercept: r.fit.intercept,
            max_rel_residual: r.fit.max_rel_residual,
            expected_exponent: r.expected.exponent,
            log_factor: r.expected.log_factor as i32,
        };
        Ok(())
    })
}

/// Runs the invariant suite; `passed` receives 1 if every check holds.
///
/// # Safety
/// `passed` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sphmod_verify(seed: u64, tol_scale: f64, passed: *mut i32) -> i32 {
    guard(|| {
        let slot = out(passed, "passed")?;
        if tol_scale.is_nan() || tol_scale <= 0.0 {
            return Err(Error::InvalidArgument(format!("tol_scale must be positive, got {tol_scale}")).into());
        }
        let rep = run_suite(&SuiteOptions { seed, tol_scale, ..SuiteOptions::default() })?;
        *slot = rep.passed as i32;
        Ok(())
    })
}
