//! C ABI for the `l3-splitting` library.
//!
//! Every fallible entry point returns an [`L3Status`]. Results that carry more
//! than a few numbers come back as opaque handles which the caller releases
//! with the matching `*_free` function. The message of the most recent error
//! on the calling thread is available from [`l3_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use l3_splitting::inner::{stokes_extract_with, StokesConfig, StokesEstimate};
use l3_splitting::manifolds::{splitting_distance, SplittingConfig, SplittingReport, TrackOptions};
use l3_splitting::numerics::Precision;
use l3_splitting::pendulum::{constant_a_lambda_integral, constant_a_x_integral};
use l3_splitting::rpc3bp::{lagrange_points, LagrangeSet, MuParam};
use l3_splitting::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum L3Status {
    Ok = 0,
    /// An argument was out of range or malformed.
    InvalidArgument = 1,
    /// A required pointer was null.
    NullPointer = 2,
    /// The computation failed (integrator, quadrature, root finder, ...).
    NumericalFailure = 3,
    /// The result would be smaller than the attainable accuracy.
    NumericalFloor = 4,
    /// An internal consistency check did not pass.
    CheckFailed = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum L3Precision {
    /// Refused for μ below the native threshold.
    Native = 0,
    Compensated = 1,
    /// Chosen from μ by the library policy.
    #[default]
    Auto = 2,
}

#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum L3ConstantAMethod {
    XIntegral = 0,
    LambdaIntegral = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> L3Status {
    match e {
        Error::Invalid(_) | Error::Io(_) => L3Status::InvalidArgument,
        Error::NumericalFloor(_) => L3Status::NumericalFloor,
        Error::Check(_) => L3Status::CheckFailed,
        _ => L3Status::NumericalFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), L3Status>) -> L3Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            L3Status::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic in l3-splitting");
            L3Status::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, L3Status>;
}

impl<T> OrStatus<T> for l3_splitting::Result<T> {
    fn or_status(self) -> Result<T, L3Status> {
        self.map_err(|e| {
            set_error(&e.to_string());
            status_of(&e)
        })
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), L3Status> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        Err(L3Status::NullPointer)
    } else {
        Ok(())
    }
}

fn invalid(msg: &str) -> L3Status {
    set_error(msg);
    L3Status::InvalidArgument
}

/// Error message of the last call on this thread; empty after a success.
///
/// The pointer stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn l3_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn l3_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by a `*_to_json` function.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn l3_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn to_c_json<T: serde::Serialize>(value: &T) -> *mut c_char {
    match serde_json::to_string(value) {
        Ok(s) => CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut()),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Singularity constant A by tanh-sinh quadrature.
///
/// `error_estimate` may be null.
///
/// # Safety
/// `value` must be valid for writes; `error_estimate` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn l3_constant_a(
    tol: f64,
    method: L3ConstantAMethod,
    value: *mut f64,
    error_estimate: *mut f64,
) -> L3Status {
    guard(|| {
        non_null(value, "value")?;
        let r = match method {
            L3ConstantAMethod::XIntegral => constant_a_x_integral(tol),
            L3ConstantAMethod::LambdaIntegral => constant_a_lambda_integral(tol),
        }
        .or_status()?;
        *value = r.value;
        if !error_estimate.is_null() {
            *error_estimate = r.error_estimate;
        }
        Ok(())
    })
}

/// The five Lagrange points of one mass ratio.
pub struct L3Lagrange(LagrangeSet);

#[repr(C)]
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct L3LagrangePoint {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
    pub gradient_norm: f64,
    pub eigenvalues_re: [f64; 4],
    pub eigenvalues_im: [f64; 4],
}

/// # Safety
/// `out` must be valid for writes. On success `*out` owns a handle for [`l3_lagrange_free`].
#[no_mangle]
pub unsafe extern "C" fn l3_lagrange_new(mu: f64, out: *mut *mut L3Lagrange) -> L3Status {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let m = MuParam::new(mu).or_status()?;
        let set = lagrange_points(&m).or_status()?;
        *out = Box::into_raw(Box::new(L3Lagrange(set)));
        Ok(())
    })
}

/// Point `index` in the order L1..L5 (0-based).
///
/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn l3_lagrange_point(h: *const L3Lagrange, index: usize, out: *mut L3LagrangePoint) -> L3Status {
    guard(|| {
        non_null(h, "handle")?;
        non_null(out, "out")?;
        let set = &(*h).0;
        let p = set.points.get(index).ok_or_else(|| invalid("index must be in 0..5"))?;
        let mut r = L3LagrangePoint {
            q1: p.state.q1,
            q2: p.state.q2,
            p1: p.state.p1,
            p2: p.state.p2,
            gradient_norm: p.gradient_norm,
            ..Default::default()
        };
        for (k, ev) in p.eigenvalues.iter().enumerate() {
            r.eigenvalues_re[k] = ev.re;
            r.eigenvalues_im[k] = ev.im;
        }
        *out = r;
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`l3_lagrange_new`] that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn l3_lagrange_free(h: *mut L3Lagrange) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Options of a splitting computation.
pub struct L3SplittingConfig(SplittingConfig);

/// New configuration with the library defaults.
#[no_mangle]
pub extern "C" fn l3_splitting_config_new() -> *mut L3SplittingConfig {
    Box::into_raw(Box::new(L3SplittingConfig(SplittingConfig::default())))
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_config_set_tolerance(cfg: *mut L3SplittingConfig, rel_tol: f64) -> L3Status {
    guard(|| {
        non_null(cfg, "config")?;
        if !(rel_tol > 0.0 && rel_tol < 1e-3) {
            return Err(invalid("rel_tol must lie in (0, 1e-3)"));
        }
        let c = &mut (*cfg).0;
        c.track = TrackOptions {
            horizon_scaled: c.track.horizon_scaled,
            min_primary_distance: c.track.min_primary_distance,
            ..TrackOptions::with_tol(rel_tol)
        };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_config_set_precision(cfg: *mut L3SplittingConfig, p: L3Precision) -> L3Status {
    guard(|| {
        non_null(cfg, "config")?;
        (*cfg).0.precision = match p {
            L3Precision::Native => Some(Precision::Native),
            L3Precision::Compensated => Some(Precision::Compensated),
            L3Precision::Auto => None,
        };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_config_set_seed_offset(cfg: *mut L3SplittingConfig, eps: f64) -> L3Status {
    guard(|| {
        non_null(cfg, "config")?;
        if !(eps > 0.0 && eps < 1e-3) {
            return Err(invalid("seed offset must lie in (0, 1e-3)"));
        }
        (*cfg).0.seed_offset = eps;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a configuration handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_config_free(cfg: *mut L3SplittingConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Result of a splitting computation.
pub struct L3Splitting(SplittingReport);

#[repr(C)]
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct L3SplittingSummary {
    pub mu: f64,
    pub theta_star: f64,
    pub d: f64,
    pub delta_r: f64,
    pub delta_big_r: f64,
    pub delta_g: f64,
    /// d·μ^{-1/3}·e^{A/√μ}.
    pub normalized: f64,
    pub tof_u: f64,
    pub tof_s: f64,
    pub energy_gap: f64,
    pub precision: L3Precision,
}

/// Distance between W^{u,+} and W^{s,+} on the section θ = `theta_star`.
///
/// `cfg` may be null for the defaults.
///
/// # Safety
/// `cfg` must be null or live, and `out` valid for writes. On success `*out`
/// owns a handle for [`l3_splitting_free`].
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_compute(
    mu: f64,
    theta_star: f64,
    cfg: *const L3SplittingConfig,
    out: *mut *mut L3Splitting,
) -> L3Status {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let default = SplittingConfig::default();
        let c = if cfg.is_null() { &default } else { &(*cfg).0 };
        let m = MuParam::new(mu).or_status()?;
        let r = splitting_distance(&m, theta_star, c).or_status()?;
        *out = Box::into_raw(Box::new(L3Splitting(r)));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_summary(h: *const L3Splitting, out: *mut L3SplittingSummary) -> L3Status {
    guard(|| {
        non_null(h, "handle")?;
        non_null(out, "out")?;
        let r = &(*h).0;
        *out = L3SplittingSummary {
            mu: r.mu,
            theta_star: r.theta_star,
            d: r.d,
            delta_r: r.delta_r,
            delta_big_r: r.delta_big_r,
            delta_g: r.delta_g,
            normalized: r.c,
            tof_u: r.tof_u,
            tof_s: r.tof_s,
            energy_gap: r.energy_gap,
            precision: match r.precision {
                Precision::Native => L3Precision::Native,
                Precision::Compensated => L3Precision::Compensated,
            },
        };
        Ok(())
    })
}

/// Full report as JSON, or null on failure. Release with [`l3_string_free`].
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_to_json(h: *const L3Splitting) -> *mut c_char {
    if h.is_null() {
        set_error("handle is null");
        return ptr::null_mut();
    }
    to_c_json(&(*h).0)
}

/// # Safety
/// `h` must be null or a handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn l3_splitting_free(h: *mut L3Splitting) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Stokes constant estimate of the inner equation.
pub struct L3Stokes(StokesEstimate);

/// Extracts Θ from the levels `rhos[0..n_rhos]`.
///
/// Pass `n_rhos = 0` for the default levels and `order = 0` or
/// non-positive `re_start`/`tol` for the defaults.
///
/// # Safety
/// `rhos` must point to `n_rhos` values (or be null when `n_rhos = 0`) and
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn l3_stokes_compute(
    rhos: *const f64,
    n_rhos: usize,
    re_start: f64,
    order: usize,
    tol: f64,
    out: *mut *mut L3Stokes,
) -> L3Status {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let mut cfg = StokesConfig::default();
        if n_rhos > 0 {
            non_null(rhos, "rhos")?;
            cfg.rhos = std::slice::from_raw_parts(rhos, n_rhos).to_vec();
        }
        if re_start > 0.0 {
            cfg.re_start = re_start;
        }
        if order > 0 {
            cfg.series_order = order;
        }
        if tol > 0.0 {
            cfg.rel_tol = tol;
        }
        let est = stokes_extract_with(&cfg, false).or_status()?;
        *out = Box::into_raw(Box::new(L3Stokes(est)));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle; `re`, `im` and `spread` must be valid for writes
/// (`spread` may be null).
#[no_mangle]
pub unsafe extern "C" fn l3_stokes_theta(h: *const L3Stokes, re: *mut f64, im: *mut f64, spread: *mut f64) -> L3Status {
    guard(|| {
        non_null(h, "handle")?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let e = &(*h).0;
        *re = e.theta.re;
        *im = e.theta.im;
        if !spread.is_null() {
            *spread = e.spread;
        }
        Ok(())
    })
}

/// Full estimate as JSON, or null on failure. Release with [`l3_string_free`].
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn l3_stokes_to_json(h: *const L3Stokes) -> *mut c_char {
    if h.is_null() {
        set_error("handle is null");
        return ptr::null_mut();
    }
    to_c_json(&(*h).0)
}

/// # Safety
/// `h` must be null or a handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn l3_stokes_free(h: *mut L3Stokes) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn l3_last_error_copy(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Invalid("x".into())), L3Status::InvalidArgument);
        assert_eq!(status_of(&Error::NumericalFloor("x".into())), L3Status::NumericalFloor);
        assert_eq!(status_of(&Error::NoCrossing { horizon: 1.0 }), L3Status::NumericalFailure);
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(l3_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn error_copy_truncates() {
        set_error("abcdef");
        let mut buf = [0 as c_char; 4];
        let n = unsafe { l3_last_error_copy(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) };
        assert_eq!(s.to_str().unwrap(), "abc");
    }
}
