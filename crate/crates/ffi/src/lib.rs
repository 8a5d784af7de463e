//! C ABI over the benchmark testbed, the solver registry and a few
//! statistics helpers.
//!
//! Every fallible function returns an [`HdboStatus`]; on failure the message
//! is available from [`hdbo_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use hdbo::{EvalRecord, Error, Problem, RunConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdboStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownSolver = 3,
    Numerical = 4,
    UndefinedTest = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Other = 8,
}

/// A benchmark problem instance.
pub struct HdboProblem {
    inner: Problem,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HdboStatus {
    match e {
        Error::InvalidArgument(_) | Error::InsufficientData { .. } => HdboStatus::InvalidArgument,
        Error::UnknownSolver { .. } => HdboStatus::UnknownSolver,
        Error::Numerical(_) | Error::DegenerateData(_) => HdboStatus::Numerical,
        Error::UndefinedTest(_) => HdboStatus::UndefinedTest,
        _ => HdboStatus::Other,
    }
}

fn fail(status: HdboStatus, msg: &str) -> HdboStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), HdboStatus>) -> HdboStatus {
    set_error("");
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HdboStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(HdboStatus::Panic, &msg)
        }
    }
}

fn lift(e: Error) -> HdboStatus {
    fail(status_of(&e), &e.to_string())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn hdbo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates instance `instance` of function `fid` (1 to 24) in `dim`
/// dimensions.
///
/// # Safety
///
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hdbo_problem_new(fid: u32, dim: usize, instance: u64, out: *mut *mut HdboProblem) -> HdboStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HdboStatus::NullPointer, "out is null"));
        }
        let inner = hdbo::make_problem(fid, dim, instance).map_err(lift)?;
        // SAFETY: checked non-null; the caller guarantees it is writable.
        unsafe { *out = Box::into_raw(Box::new(HdboProblem { inner })) };
        Ok(())
    })
}

/// Releases a problem. Null is ignored.
///
/// # Safety
///
/// `problem` must come from [`hdbo_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hdbo_problem_free(problem: *mut HdboProblem) {
    if !problem.is_null() {
        // SAFETY: the pointer was produced by Box::into_raw in hdbo_problem_new.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Dimension of the problem, 0 for a null handle.
///
/// # Safety
///
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hdbo_problem_dim(problem: *const HdboProblem) -> usize {
    // SAFETY: null or live per the contract.
    unsafe { problem.as_ref() }.map_or(0, |p| p.inner.dim())
}

/// Optimal value of the problem.
///
/// # Safety
///
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hdbo_problem_f_opt(problem: *const HdboProblem, out: *mut f64) -> HdboStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| fail(HdboStatus::NullPointer, "problem is null"))?;
        if out.is_null() {
            return Err(fail(HdboStatus::NullPointer, "out is null"));
        }
        // SAFETY: checked non-null.
        unsafe { *out = p.inner.f_opt() };
        Ok(())
    })
}

/// Evaluates the problem at `x[0..len]`; `len` must equal the dimension.
///
/// # Safety
///
/// `x` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdbo_problem_evaluate(
    problem: *const HdboProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HdboStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| fail(HdboStatus::NullPointer, "problem is null"))?;
        if x.is_null() || out.is_null() {
            return Err(fail(HdboStatus::NullPointer, "x or out is null"));
        }
        // SAFETY: the caller guarantees `len` readable elements.
        let xs = unsafe { std::slice::from_raw_parts(x, len) };
        let y = p.inner.evaluate(xs).map_err(lift)?;
        // SAFETY: checked non-null.
        unsafe { *out = y };
        Ok(())
    })
}

/// Runs the named solver on `problem` for `budget` evaluations with an
/// initial design of `n0` points. The objective value of every evaluation
/// is written to `ys[0..budget]`.
///
/// # Safety
///
/// `name` must be a NUL-terminated string, `problem` a live handle and `ys`
/// must point to `ys_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hdbo_run_solver(
    name: *const c_char,
    problem: *const HdboProblem,
    budget: usize,
    n0: usize,
    seed: u64,
    ys: *mut f64,
    ys_len: usize,
) -> HdboStatus {
    guard(|| {
        if name.is_null() || ys.is_null() {
            return Err(fail(HdboStatus::NullPointer, "name or ys is null"));
        }
        // SAFETY: null or live per the contract.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| fail(HdboStatus::NullPointer, "problem is null"))?;
        // SAFETY: the caller guarantees a NUL-terminated string.
        let name = unsafe { CStr::from_ptr(name) }
            .to_str()
            .map_err(|_| fail(HdboStatus::InvalidArgument, "solver name is not UTF-8"))?;
        if ys_len < budget {
            return Err(fail(HdboStatus::BufferTooSmall, &format!("ys holds {ys_len} values, budget is {budget}")));
        }
        // SAFETY: the caller guarantees `ys_len` writable elements.
        let out = unsafe { std::slice::from_raw_parts_mut(ys, ys_len) };
        let mut observer = |r: &EvalRecord<'_>| out[r.index - 1] = r.y;
        hdbo::registry::dispatch(name, &p.inner, &RunConfig { budget, n0, seed }, &mut observer).map_err(lift)?;
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test on `a[0..n]` and `b[0..n]`.
///
/// # Safety
///
/// `a` and `b` must point to `n` readable doubles, the outputs must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hdbo_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> HdboStatus {
    guard(|| {
        if a.is_null() || b.is_null() || statistic.is_null() || p_value.is_null() {
            return Err(fail(HdboStatus::NullPointer, "null argument"));
        }
        // SAFETY: the caller guarantees `n` readable elements each.
        let (a, b) = unsafe { (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n)) };
        let r = hdbo::analysis::wilcoxon_signed_rank(a, b).map_err(lift)?;
        // SAFETY: checked non-null.
        unsafe {
            *statistic = r.statistic;
            *p_value = r.p_value;
        }
        Ok(())
    })
}

/// Closed-form expected improvement below `f_best` of a normal prediction.
#[no_mangle]
pub extern "C" fn hdbo_expected_improvement(mean: f64, std: f64, f_best: f64) -> f64 {
    hdbo::acquisition::expected_improvement(mean, std, f_best)
}

/// Number of registered solvers.
#[no_mangle]
pub extern "C" fn hdbo_solver_count() -> usize {
    hdbo::registry::list_solvers().len()
}

/// Name of solver `index`, or null when out of range. The string is static.
#[no_mangle]
pub extern "C" fn hdbo_solver_name(index: usize) -> *const c_char {
    const NAMES: [&CStr; 6] = [c"bo", c"pca-bo", c"kpca-bo", c"turbo1", c"turbom", c"cmaes"];
    debug_assert!(NAMES.iter().zip(hdbo::registry::list_solvers()).all(|(c, s)| c.to_str() == Ok(s.name)));
    NAMES.get(index).map_or(ptr::null(), |c| c.as_ptr())
}
