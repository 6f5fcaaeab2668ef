//! C ABI for the `eccrm` solvers.
//!
//! Problems and traces are opaque heap handles created and released through
//! this interface. Every fallible function returns an [`EccrmStatus`]; on a
//! nonzero status, [`eccrm_last_error`] describes the failure for the calling
//! thread. Strings handed out by the library are released with
//! [`eccrm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eccrm::problems::{GeneratorSpec, InstanceDocument};
use eccrm::solver::{solve, Method, RunStatus, SolveTrace, SolverConfig};
use eccrm::{CfpError, Point, ProblemPair};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccrmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON, invalid spec, kernel, step or config.
    InvalidArgument = 3,
    DimensionMismatch = 4,
    /// A projection, eigendecomposition or circumcenter failed.
    NumericalFailure = 5,
    Io = 6,
    Panic = 7,
}

/// Termination reason of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccrmRunStatus {
    Converged = 0,
    MaxIter = 1,
    NumericalFailure = 2,
}

/// Selects one of the two sets of a problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccrmSet {
    X = 0,
    Y = 1,
}

/// Opaque problem handle.
pub struct EccrmProblem {
    pair: ProblemPair,
}

/// Opaque solve result.
pub struct EccrmTrace {
    trace: SolveTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &CfpError) -> EccrmStatus {
    match e {
        CfpError::DimensionMismatch { .. } => EccrmStatus::DimensionMismatch,
        CfpError::NonconvergedProjection { .. }
        | CfpError::EigenFailure
        | CfpError::DegenerateCircumcenter { .. }
        | CfpError::NumericalFailure { .. } => EccrmStatus::NumericalFailure,
        CfpError::Io(_) => EccrmStatus::Io,
        _ => EccrmStatus::InvalidArgument,
    }
}

/// Runs `f`, recording the error message and mapping panics.
fn guard(f: impl FnOnce() -> Result<(), (EccrmStatus, String)>) -> EccrmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EccrmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside eccrm".into());
            EccrmStatus::Panic
        }
    }
}

fn lib_err(e: CfpError) -> (EccrmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (EccrmStatus, String) {
    (EccrmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (EccrmStatus, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (EccrmStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (EccrmStatus, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (EccrmStatus, String)> {
    if out.is_null() {
        return Err(null_err(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn copy_point(src: &Point, out: *mut f64, len: usize) -> Result<(), (EccrmStatus, String)> {
    if out.is_null() {
        return Err(null_err("output buffer"));
    }
    if len != src.len() {
        return Err((EccrmStatus::DimensionMismatch, format!("output buffer has length {len}, need {}", src.len())));
    }
    unsafe { std::slice::from_raw_parts_mut(out, len) }.copy_from_slice(src.as_slice());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eccrm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eccrm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates an instance from a generator spec such as
/// `{"family": "halfspace_wedge", "n": 3, "angle": 0.5, "seed": 7}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_generate(spec_json: *const c_char, out: *mut *mut EccrmProblem) -> EccrmStatus {
    guard(|| {
        let text = read_str(spec_json, "spec_json")?;
        let spec: GeneratorSpec = serde_json::from_str(text).map_err(|e| lib_err(e.into()))?;
        let pair = spec.generate().map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(EccrmProblem { pair })), "out")
    })
}

/// Loads an instance document as written by `eccrm gen`.
///
/// # Safety
/// `doc_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_from_json(doc_json: *const c_char, out: *mut *mut EccrmProblem) -> EccrmStatus {
    guard(|| {
        let text = read_str(doc_json, "doc_json")?;
        let pair = InstanceDocument::from_json(text).and_then(InstanceDocument::into_pair).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(EccrmProblem { pair })), "out")
    })
}

/// Serializes the problem as an instance document. Free the string with
/// [`eccrm_string_free`].
///
/// # Safety
/// `problem` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_to_json(problem: *const EccrmProblem, out: *mut *mut c_char) -> EccrmStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        let text = InstanceDocument::from_pair(&p.pair, None).to_json().map_err(lib_err)?;
        write_out(out, into_c_string(text), "out")
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_free(problem: *mut EccrmProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Ambient dimension, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_dim(problem: *const EccrmProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.pair.dim())
}

/// Copies the starting point into `out` (length `len` must equal the dimension).
///
/// # Safety
/// `problem` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eccrm_problem_start(problem: *const EccrmProblem, out: *mut f64, len: usize) -> EccrmStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        copy_point(&p.pair.z0, out, len)
    })
}

/// Projects `z` onto the selected set, writing `len` doubles to `out`.
///
/// # Safety
/// `z` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eccrm_project(
    problem: *const EccrmProblem,
    set: EccrmSet,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> EccrmStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        let z = Point::from_column_slice(read_slice(z, len, "z")?);
        let target = match set {
            EccrmSet::X => &p.pair.x,
            EccrmSet::Y => &p.pair.y,
        };
        let proj = target.project(&z).map_err(lib_err)?;
        copy_point(&proj, out, len)
    })
}

/// Feasibility gap `max(dist_X(z), dist_Y(z))`.
///
/// # Safety
/// `z` must hold `len` doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_gap(problem: *const EccrmProblem, z: *const f64, len: usize, out: *mut f64) -> EccrmStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        let z = Point::from_column_slice(read_slice(z, len, "z")?);
        let gap = p.pair.gap(&z).map_err(lib_err)?;
        write_out(out, gap, "out")
    })
}

/// Solves from the problem's starting point. `method` uses the command-line
/// syntax: `map`, `ccrm`, `<kernel>:<alpha>` or `<kernel>:vanishing`, with
/// kernels such as `Y`, `XY`, `YXY`.
///
/// # Safety
/// `method` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_solve(
    problem: *const EccrmProblem,
    method: *const c_char,
    eps: f64,
    max_iter: usize,
    out: *mut *mut EccrmTrace,
) -> EccrmStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null_err("problem"))?;
        let method: Method = read_str(method, "method")?.parse().map_err(lib_err)?;
        let trace = solve(&p.pair, &SolverConfig::new(method, eps, max_iter)).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(EccrmTrace { trace })), "out")
    })
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_free(trace: *mut EccrmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_status(trace: *const EccrmTrace) -> EccrmRunStatus {
    match trace.as_ref().map(|t| t.trace.status) {
        Some(RunStatus::Converged) => EccrmRunStatus::Converged,
        Some(RunStatus::MaxIter) => EccrmRunStatus::MaxIter,
        _ => EccrmRunStatus::NumericalFailure,
    }
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_iterations(trace: *const EccrmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.iterations)
}

/// Gap at the final iterate; NaN for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_final_delta(trace: *const EccrmTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.trace.final_delta())
}

/// Total projections spent by the method, excluding diagnostics.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_projections(trace: *const EccrmTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.trace.total_algorithmic_projections())
}

/// # Safety
/// `trace` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_final_point(trace: *const EccrmTrace, out: *mut f64, len: usize) -> EccrmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null_err("trace"))?;
        copy_point(&t.trace.final_point, out, len)
    })
}

/// Per-iteration CSV (`k,delta,dist_sref,alpha,...`). Free the string with
/// [`eccrm_string_free`].
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eccrm_trace_csv(trace: *const EccrmTrace, out: *mut *mut c_char) -> EccrmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null_err("trace"))?;
        write_out(out, into_c_string(t.trace.to_csv()), "out")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eccrm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
