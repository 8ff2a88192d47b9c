//! C ABI over the planning toolkit. The generated header lands in
//! `include/moe_planner.h` (see `build.rs`).
//!
//! Conventions:
//! - Status-returning functions give 0 on success; anything else is an error
//!   and leaves a message readable via [`moe_last_error_message`].
//! - String-returning functions give NULL on error. Non-NULL results are
//!   owned by the caller and must be released with [`moe_string_free`].
//! - Exact parameter counts don't always fit a double; the `*_json` functions
//!   carry them as decimal strings, the numeric getters round to f64.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use moe_planner::accounting::{
    active_params, parse_gran, parse_rational_str, solve_experts_for_budget, sparsity_stats,
    total_params, ModelDims, RoundingMode,
};
use moe_planner::chinchilla::{chinchilla_eval, fit_chinchilla, ChinchillaFit, FitOptions};
use moe_planner::optimizer::optimize;
use moe_planner::planfile::parse_plan_str;
use moe_planner::records::{read_curve_str, read_records_str};
use moe_planner::regression::{fit_power_law, FeatureSpec, OlsOptions};
use moe_planner::report::{CountReport, PlanReport};
use moe_planner::stats::student_t_sf;
use moe_planner::PlannerError;
use num_traits::ToPrimitive;

/// Result codes. 2/3/4 mirror the command-line exit codes; 1 flags misuse of
/// the binding itself (null pointer, non-UTF-8 text); 5 is an internal fault.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoeStatus {
    Ok = 0,
    BadPointer = 1,
    InvalidInput = 2,
    Infeasible = 3,
    Numerical = 4,
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(e: PlannerError) -> MoeStatus {
    set_error(&e.to_string());
    match e.exit_code() {
        3 => MoeStatus::Infeasible,
        4 => MoeStatus::Numerical,
        _ => MoeStatus::InvalidInput,
    }
}

fn guarded(f: impl FnOnce() -> MoeStatus) -> MoeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MoeStatus::Internal
        }
    }
}

fn guarded_string(f: impl FnOnce() -> Result<String, PlannerError>) -> *mut c_char {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(text)) => {
            clear_error();
            CString::new(text.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// Borrow a required C string argument, recording an error when it is NULL
/// or not UTF-8.
///
/// # Safety
/// Non-null `ptr` must point to a NUL-terminated string valid for the call.
unsafe fn arg_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MoeStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is a null pointer"));
        return Err(MoeStatus::BadPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        MoeStatus::BadPointer
    })
}

fn require_out<T>(ptr: *mut T, what: &str) -> Result<(), MoeStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is a null pointer"));
        return Err(MoeStatus::BadPointer);
    }
    Ok(())
}

/// Message for the most recent failure on the calling thread, or NULL when
/// the last call succeeded. The pointer stays valid until the next FFI call
/// on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn moe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn moe_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Release a string returned by one of the `*_json` functions.
///
/// # Safety
/// `s` must have been returned by this library and not yet freed. NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn moe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Configuration handles

/// Opaque model configuration; create with [`moe_dims_new`], release with
/// [`moe_dims_free`].
pub struct MoeDims(ModelDims);

/// Validate a configuration and return an owned handle through `out`.
///
/// `g` is the granularity as text: an integer, decimal, or fraction
/// ("4", "2.5", "27/10").
///
/// # Safety
/// `g` must be a NUL-terminated string and `out` must point to writable
/// storage for one pointer, both valid for the duration of the call. On
/// success `*out` owns the handle until [`moe_dims_free`].
#[no_mangle]
pub unsafe extern "C" fn moe_dims_new(
    l: u64,
    d: u64,
    g: *const c_char,
    n_exp: u64,
    n_topk: u64,
    out: *mut *mut MoeDims,
) -> MoeStatus {
    guarded(|| {
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let g = match arg_str(g, "g") {
            Ok(text) => text,
            Err(status) => return status,
        };
        let gran = match parse_gran(g) {
            Ok(v) => v,
            Err(e) => return fail(e),
        };
        match ModelDims::new(l, d, gran, n_exp, n_topk) {
            Ok(dims) => {
                clear_error();
                *out = Box::into_raw(Box::new(MoeDims(dims)));
                MoeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a handle from [`moe_dims_new`].
///
/// # Safety
/// `dims` must be a pointer from [`moe_dims_new`] not yet freed. NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn moe_dims_free(dims: *mut MoeDims) {
    if !dims.is_null() {
        drop(Box::from_raw(dims));
    }
}

/// # Safety
/// Relies on the caller upholding [`moe_dims_new`]/[`moe_dims_free`]
/// ownership for `dims` and passing writable storage in `out`.
unsafe fn dims_metric(
    dims: *const MoeDims,
    out: *mut f64,
    f: impl FnOnce(&ModelDims) -> f64,
) -> MoeStatus {
    guarded(|| {
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        if dims.is_null() {
            set_error("dims is a null pointer");
            return MoeStatus::BadPointer;
        }
        *out = f(&(*dims).0);
        clear_error();
        MoeStatus::Ok
    })
}

/// Total parameter count rounded to double precision. Exact digits are
/// available via [`moe_count_json`].
///
/// # Safety
/// `dims` must be a live handle from [`moe_dims_new`]; `out` must point to
/// writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn moe_total_params(dims: *const MoeDims, out: *mut f64) -> MoeStatus {
    dims_metric(dims, out, |d| total_params(d).to_f64().unwrap_or(f64::NAN))
}

/// Active parameter count rounded to double precision.
///
/// # Safety
/// As for [`moe_total_params`].
#[no_mangle]
pub unsafe extern "C" fn moe_active_params(dims: *const MoeDims, out: *mut f64) -> MoeStatus {
    dims_metric(dims, out, |d| active_params(d).to_f64().unwrap_or(f64::NAN))
}

/// N_active / N_total.
///
/// # Safety
/// As for [`moe_total_params`].
#[no_mangle]
pub unsafe extern "C" fn moe_active_ratio(dims: *const MoeDims, out: *mut f64) -> MoeStatus {
    dims_metric(dims, out, |d| sparsity_stats(d).active_ratio)
}

/// Expert sparsity n_exp / n_topk.
///
/// # Safety
/// As for [`moe_total_params`].
#[no_mangle]
pub unsafe extern "C" fn moe_sparsity(dims: *const MoeDims, out: *mut f64) -> MoeStatus {
    dims_metric(dims, out, |d| sparsity_stats(d).s)
}

/// Full counting report as JSON (exact counts as decimal strings), or NULL
/// on error.
///
/// # Safety
/// `dims` must be a live handle from [`moe_dims_new`]. Free the result with
/// [`moe_string_free`].
#[no_mangle]
pub unsafe extern "C" fn moe_count_json(dims: *const MoeDims) -> *mut c_char {
    if dims.is_null() {
        set_error("dims is a null pointer");
        return ptr::null_mut();
    }
    let dims = &(*dims).0;
    guarded_string(|| {
        serde_json::to_string(&CountReport::new(dims))
            .map_err(|e| PlannerError::Parse(e.to_string()))
    })
}

// ---------------------------------------------------------------------------
// Direct numeric entry points

/// Integer expert counts matching the given budgets at fixed (l, d, g).
/// Budgets are text numbers ("2.35e11", "475", "7/2"). `half_away` selects
/// schoolbook tie rounding instead of ties-to-even.
///
/// # Safety
/// `g`, `target_total`, and `target_active` must be NUL-terminated strings;
/// `out_n_exp` and `out_n_topk` must point to writable u64 storage.
#[no_mangle]
pub unsafe extern "C" fn moe_solve_experts(
    l: u64,
    d: u64,
    g: *const c_char,
    target_total: *const c_char,
    target_active: *const c_char,
    half_away: bool,
    out_n_exp: *mut u64,
    out_n_topk: *mut u64,
) -> MoeStatus {
    guarded(|| {
        if let Err(status) = require_out(out_n_exp, "out_n_exp") {
            return status;
        }
        if let Err(status) = require_out(out_n_topk, "out_n_topk") {
            return status;
        }
        let parsed = (|| -> Result<_, MoeStatus> {
            let g = parse_gran(arg_str(g, "g")?).map_err(fail)?;
            let total = parse_rational_str(arg_str(target_total, "target_total")?).map_err(fail)?;
            let active =
                parse_rational_str(arg_str(target_active, "target_active")?).map_err(fail)?;
            Ok((g, total, active))
        })();
        let (g, total, active) = match parsed {
            Ok(v) => v,
            Err(status) => return status,
        };
        let rounding =
            if half_away { RoundingMode::HalfAwayFromZero } else { RoundingMode::HalfEven };
        match solve_experts_for_budget(l, d, g, &total, &active, rounding) {
            Ok(sol) => {
                *out_n_exp = sol.n_exp;
                *out_n_topk = sol.n_topk;
                clear_error();
                MoeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loss predicted by a saturating power-law curve at (N, D).
///
/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn moe_chinchilla_eval(
    a: f64,
    b: f64,
    e: f64,
    alpha: f64,
    beta: f64,
    n_total: f64,
    tokens_d: f64,
    out: *mut f64,
) -> MoeStatus {
    guarded(|| {
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let fit = ChinchillaFit {
            a,
            b,
            e,
            alpha,
            beta,
            objective_value: 0.0,
            converged: true,
            start_point: [0.0; 5],
            start_index: 0,
        };
        match chinchilla_eval(&fit, n_total, tokens_d) {
            Ok(v) => {
                *out = v;
                clear_error();
                MoeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Upper-tail probability of the Student-t distribution with `dof` degrees
/// of freedom.
///
/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn moe_student_t_sf(t: f64, dof: u64, out: *mut f64) -> MoeStatus {
    guarded(|| {
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        if dof == 0 {
            set_error("degrees of freedom must be at least 1");
            return MoeStatus::InvalidInput;
        }
        *out = student_t_sf(t, dof);
        clear_error();
        MoeStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// JSON pipelines over file content

/// Power-law regression over records CSV content (the same format the CLI
/// reads from disk). Returns the fit report as JSON, or NULL on error.
///
/// # Safety
/// `records_csv` and `spec` must be NUL-terminated strings. Free the result
/// with [`moe_string_free`].
#[no_mangle]
pub unsafe extern "C" fn moe_fit_power_json(
    records_csv: *const c_char,
    spec: *const c_char,
) -> *mut c_char {
    let records_csv = match arg_str(records_csv, "records_csv") {
        Ok(text) => text,
        Err(_) => return ptr::null_mut(),
    };
    let spec = match arg_str(spec, "spec") {
        Ok(text) => text,
        Err(_) => return ptr::null_mut(),
    };
    guarded_string(|| {
        let records = read_records_str(records_csv)?;
        let spec = FeatureSpec::parse(spec)?;
        let report = fit_power_law(&records, &spec, &OlsOptions::default())?;
        serde_json::to_string(&report).map_err(|e| PlannerError::Parse(e.to_string()))
    })
}

/// Saturating loss-curve fit over curve CSV content. Returns the fit as
/// JSON, or NULL on error.
///
/// # Safety
/// `curve_csv` must be a NUL-terminated string. Free the result with
/// [`moe_string_free`].
#[no_mangle]
pub unsafe extern "C" fn moe_fit_chinchilla_json(
    curve_csv: *const c_char,
    delta: f64,
) -> *mut c_char {
    let curve_csv = match arg_str(curve_csv, "curve_csv") {
        Ok(text) => text,
        Err(_) => return ptr::null_mut(),
    };
    guarded_string(|| {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(PlannerError::InvalidInput(format!(
                "delta must be positive, got {delta}"
            )));
        }
        let points = read_curve_str(curve_csv)?;
        let fit = fit_chinchilla(&points, &FitOptions { delta, ..FitOptions::default() })?;
        serde_json::to_string(&fit).map_err(|e| PlannerError::Parse(e.to_string()))
    })
}

/// Constrained architecture search over plan TOML content. Returns the plan
/// report as JSON — infeasible plans still produce a report with a null
/// `best` — or NULL on error.
///
/// # Safety
/// `plan_toml` must be a NUL-terminated string. Free the result with
/// [`moe_string_free`].
#[no_mangle]
pub unsafe extern "C" fn moe_plan_json(
    plan_toml: *const c_char,
    include_table: bool,
) -> *mut c_char {
    let plan_toml = match arg_str(plan_toml, "plan_toml") {
        Ok(text) => text,
        Err(_) => return ptr::null_mut(),
    };
    guarded_string(|| {
        let spec = parse_plan_str(plan_toml)?;
        let out = optimize(&spec.constraints)?;
        let report = PlanReport::new(&spec.constraints, &out, spec.reference.as_ref(), include_table);
        serde_json::to_string(&report).map_err(|e| PlannerError::Parse(e.to_string()))
    })
}
