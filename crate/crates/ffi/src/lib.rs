//! C interface to potmax.
//!
//! Configs and reports are opaque handles. Every fallible call returns a
//! [`PotmaxStatus`]; the message of the last failure on the calling thread is
//! available from [`potmax_last_error_message`]. Strings handed out by the
//! library are released with [`potmax_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use potmax::harness::{self, catalog_list, emit_plotdata, parse_config, ExperimentConfig, RunReport};
use potmax::kernels::{self, ExitVariant};
use potmax::stats::Parallel;
use potmax::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotmaxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Domain = 4,
    Unsupported = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Exit-kernel form for [`potmax_exit_kernel_center`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotmaxExitVariant {
    Normalized = 0,
    AsPrinted = 1,
}

/// Parsed and validated experiment configuration.
pub struct PotmaxConfig(ExperimentConfig);

/// Completed run.
pub struct PotmaxReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PotmaxStatus {
    match e {
        Error::Config(_) => PotmaxStatus::InvalidConfig,
        Error::Domain(_) | Error::Singular | Error::Integrability { .. } | Error::Rejected(_) => PotmaxStatus::Domain,
        Error::Unsupported(_) => PotmaxStatus::Unsupported,
        Error::Quadrature { .. } | Error::Budget { .. } | Error::NonContracting { .. } | Error::Infeasible(_) => {
            PotmaxStatus::Numerical
        }
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => PotmaxStatus::Io,
    }
}

fn fail(status: PotmaxStatus, msg: impl Into<String>) -> PotmaxStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PotmaxStatus>) -> PotmaxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PotmaxStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PotmaxStatus::Panic, msg)
        }
    }
}

fn lib<T>(r: potmax::Result<T>) -> Result<T, PotmaxStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, PotmaxStatus> {
    if s.is_null() {
        return Err(fail(PotmaxStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(PotmaxStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn read_vec(p: *const f64, n: usize) -> Result<Vec<f64>, PotmaxStatus> {
    if p.is_null() {
        return Err(fail(PotmaxStatus::NullPointer, "null coordinate array"));
    }
    Ok(std::slice::from_raw_parts(p, n).to_vec())
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), PotmaxStatus> {
    if out.is_null() {
        return Err(fail(PotmaxStatus::NullPointer, "null output pointer"));
    }
    *out = v;
    Ok(())
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn potmax_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn potmax_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn potmax_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a TOML config. On failure every violation is in the error message.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_config_parse(toml: *const c_char, out: *mut *mut PotmaxConfig) -> PotmaxStatus {
    guard(|| {
        let text = read_str(toml)?;
        let cfg = lib(parse_config(text))?;
        write_out(out, Box::into_raw(Box::new(PotmaxConfig(cfg))))
    })
}

/// # Safety
/// `cfg` must come from [`potmax_config_parse`] and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn potmax_config_free(cfg: *mut PotmaxConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Override the master seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn potmax_config_set_seed(cfg: *mut PotmaxConfig, seed: u64) -> PotmaxStatus {
    guard(|| {
        let c = cfg
            .as_mut()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null config"))?;
        c.0.seed = seed;
        Ok(())
    })
}

/// SHA-256 of the canonical config as a hex string.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_config_hash(cfg: *const PotmaxConfig, out: *mut *mut c_char) -> PotmaxStatus {
    guard(|| {
        let c = cfg
            .as_ref()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null config"))?;
        write_out(out, to_c(c.0.hash()))
    })
}

/// Validate a TOML config without keeping it. Returns `InvalidConfig` with the
/// violations in the error message.
///
/// # Safety
/// `toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn potmax_config_validate(toml: *const c_char) -> PotmaxStatus {
    guard(|| {
        let text = read_str(toml)?;
        lib(parse_config(text)).map(|_| ())
    })
}

/// Run an experiment with `workers` threads (0 = environment default).
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_run(
    cfg: *const PotmaxConfig,
    workers: u32,
    out: *mut *mut PotmaxReport,
) -> PotmaxStatus {
    guard(|| {
        let c = cfg
            .as_ref()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null config"))?;
        let parallel = if workers == 0 {
            Parallel::from_env()
        } else {
            Parallel::new(workers as usize)
        };
        let report = lib(harness::run(&c.0, &parallel))?;
        write_out(out, Box::into_raw(Box::new(PotmaxReport(report))))
    })
}

/// # Safety
/// `report` must come from [`potmax_run`] and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn potmax_report_free(report: *mut PotmaxReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// 0 on completion, 2 on an undecided verdict, -1 for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn potmax_report_exit_code(report: *const PotmaxReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.0.exit_code)
}

/// The report as JSON.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_report_json(report: *const PotmaxReport, out: *mut *mut c_char) -> PotmaxStatus {
    guard(|| {
        let r = report
            .as_ref()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null report"))?;
        write_out(out, to_c(r.0.to_json()))
    })
}

/// Write `report.json` and the CSV files into `dir`.
///
/// # Safety
/// `report` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn potmax_report_write(report: *const PotmaxReport, dir: *const c_char) -> PotmaxStatus {
    guard(|| {
        let r = report
            .as_ref()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null report"))?;
        let d = read_str(dir)?;
        lib(r.0.write(Path::new(d))).map(|_| ())
    })
}

/// Plot data CSV for `what` (fine-limit, classify, capacity, fk, resolvent, revuz, exit-kernel).
///
/// # Safety
/// `report` must be a live handle; `what` a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_report_plotdata(
    report: *const PotmaxReport,
    what: *const c_char,
    out: *mut *mut c_char,
) -> PotmaxStatus {
    guard(|| {
        let r = report
            .as_ref()
            .ok_or_else(|| fail(PotmaxStatus::NullPointer, "null report"))?;
        let w = read_str(what)?;
        let csv = lib(emit_plotdata(&r.0, w))?;
        write_out(out, to_c(csv))
    })
}

/// The candidate catalog as a JSON array.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_catalog_json(out: *mut *mut c_char) -> PotmaxStatus {
    guard(|| {
        let text = serde_json::to_string(&catalog_list()).map_err(|e| fail(PotmaxStatus::Io, e.to_string()))?;
        write_out(out, to_c(text))
    })
}

/// Green function of `Δ` on `B(0, r) ⊂ ℝ^d` at `(x, y)`.
///
/// # Safety
/// `x` and `y` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_green_ball_brownian(
    d: usize,
    r: f64,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> PotmaxStatus {
    guard(|| {
        let (x, y) = (read_vec(x, d)?, read_vec(y, d)?);
        let v = lib(kernels::green_ball_brownian(d, r, &x, &y))?;
        write_out(out, v)
    })
}

/// Expected exit time from `B(0, r)` started at `x`.
///
/// # Safety
/// `x` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_expected_residence(d: usize, r: f64, x: *const f64, out: *mut f64) -> PotmaxStatus {
    guard(|| {
        let x = read_vec(x, d)?;
        let v = lib(kernels::expected_residence(d, r, &x))?;
        write_out(out, v)
    })
}

/// Exit-kernel density for the stable walk started at the center of `B(0, r)`.
///
/// # Safety
/// `y` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn potmax_exit_kernel_center(
    d: usize,
    alpha: f64,
    r: f64,
    y: *const f64,
    variant: PotmaxExitVariant,
    out: *mut f64,
) -> PotmaxStatus {
    guard(|| {
        let y = read_vec(y, d)?;
        let v = match variant {
            PotmaxExitVariant::Normalized => ExitVariant::Normalized,
            PotmaxExitVariant::AsPrinted => ExitVariant::AsPrinted,
        };
        let val = lib(kernels::exit_kernel_center(d, alpha, r, &y, v))?;
        write_out(out, val)
    })
}
