//! C ABI for `nbody-ctrl`.
//!
//! Families, schedules and plans are opaque heap handles released with the
//! matching `*_free`. Every fallible call returns an [`NbcStatus`]; on
//! failure [`nbc_last_error_message`] describes the error for the calling
//! thread. Indices of fields and gaps are 1-based as in the Rust API.
//! Matrices are written row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nbody_ctrl::plan::{self, PlanResult};
use nbody_ctrl::sim::{self, ControlSchedule};
use nbody_ctrl::verify;
use nbody_ctrl::{Error, FieldFamily, SeparationConfig, Space};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    UnsupportedFamily = 4,
    IndexOutOfRange = 5,
    DimensionMismatch = 6,
    WrongSpace = 7,
    NotSeparated = 8,
    OutsideRegion = 9,
    InvalidSchedule = 10,
    NonFinite = 11,
    Singular = 12,
    DampingUnderflow = 13,
    NotConverged = 14,
    Panic = 15,
}

/// Ambient space of a family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbcSpace {
    RealLine = 0,
    Circle = 1,
}

/// Opaque field family.
pub struct NbcFamily(FieldFamily);

/// Opaque control schedule.
pub struct NbcSchedule(ControlSchedule);

/// Opaque planner result.
pub struct NbcPlan(PlanResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> NbcStatus {
    match err {
        Error::InvalidConfig(_) => NbcStatus::InvalidConfig,
        Error::UnsupportedFamily(_) => NbcStatus::UnsupportedFamily,
        Error::IndexOutOfRange { .. } => NbcStatus::IndexOutOfRange,
        Error::DimensionMismatch { .. } => NbcStatus::DimensionMismatch,
        Error::WrongSpace(_) => NbcStatus::WrongSpace,
        Error::NotSeparated { .. } => NbcStatus::NotSeparated,
        Error::OutsideRegion(_) => NbcStatus::OutsideRegion,
        Error::InvalidSchedule(_) => NbcStatus::InvalidSchedule,
        Error::NonFinite { .. } => NbcStatus::NonFinite,
        Error::Singular => NbcStatus::Singular,
        Error::DampingUnderflow { .. } => NbcStatus::DampingUnderflow,
        Error::NotConverged { .. } => NbcStatus::NotConverged,
    }
}

/// Failure inside an FFI body: a status and its message.
struct Fail(NbcStatus, String);

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        err_ref(&err)
    }
}

fn err_ref(err: &Error) -> Fail {
    Fail(status_of(err), err.to_string())
}

fn null(what: &str) -> Fail {
    Fail(NbcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Fail {
    Fail(NbcStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> NbcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => NbcStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            NbcStatus::Panic
        }
    }
}

unsafe fn family_ref<'a>(family: *const NbcFamily) -> Result<&'a FieldFamily, Fail> {
    family.as_ref().map(|f| &f.0).ok_or_else(|| null("family"))
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

fn state_len(family: &FieldFamily, len: usize) -> Result<(), Fail> {
    if len != family.n() {
        return Err(Error::DimensionMismatch {
            expected: family.n(),
            got: len,
        }
        .into());
    }
    Ok(())
}

fn into_string(text: String) -> *mut c_char {
    CString::new(text).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nbc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nbc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds the family for `(space, n, m, epsilon)`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nbc_family_new(
    space: NbcSpace,
    n: usize,
    m: usize,
    epsilon: f64,
    out: *mut *mut NbcFamily,
) -> NbcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let space = match space {
            NbcSpace::RealLine => Space::RealLine,
            NbcSpace::Circle => Space::Circle,
        };
        let family = FieldFamily::new(SeparationConfig::new(space, n, epsilon)?, m)?;
        out.write(Box::into_raw(Box::new(NbcFamily(family))));
        Ok(())
    })
}

/// # Safety
/// `family` must come from [`nbc_family_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn nbc_family_free(family: *mut NbcFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Number of bodies `n` and fields `m`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_family_dims(
    family: *const NbcFamily,
    n: *mut usize,
    m: *mut usize,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        write(n, f.n(), "n")?;
        write(m, f.m(), "m")
    })
}

/// `f_l(x)` into `out` (length `n`).
///
/// # Safety
/// `x` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn nbc_eval_field(
    family: *const NbcFamily,
    l: usize,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        let v = f.eval_field(l, input(x, n, "x")?)?;
        output(out, n, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Jacobian of `f_l` at `x` into `out` (`n × n`, row-major).
///
/// # Safety
/// `x` must hold `n` doubles and `out` `n * n`.
#[no_mangle]
pub unsafe extern "C" fn nbc_eval_jacobian(
    family: *const NbcFamily,
    l: usize,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        let jac = f.eval_jacobian(l, input(x, n, "x")?)?;
        let out = output(out, n * n, "out")?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = jac[(i, j)];
            }
        }
        Ok(())
    })
}

/// Lie bracket `[f_l, f_k](x)` into `out` (length `n`).
///
/// # Safety
/// `x` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn nbc_bracket(
    family: *const NbcFamily,
    l: usize,
    k: usize,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        let v = f.bracket(l, k, input(x, n, "x")?)?;
        output(out, n, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Numerical rank of the fields together with the brackets `[f_1, f_l]`.
///
/// # Safety
/// `x` must hold `n` doubles; `rank` and `min_singular_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_spanning_rank(
    family: *const NbcFamily,
    x: *const f64,
    n: usize,
    rank: *mut usize,
    min_singular_value: *mut f64,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        let r = verify::spanning_rank(f, input(x, n, "x")?)?;
        write(rank, r.rank, "rank")?;
        write(
            min_singular_value,
            r.min_singular_value,
            "min_singular_value",
        )
    })
}

/// Spanning rank at `samples` random points with every gap above `margin`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_rank_scan(
    family: *const NbcFamily,
    samples: usize,
    seed: u64,
    margin: f64,
    min_rank: *mut usize,
    passed: *mut bool,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        let report = verify::rank_scan(f, samples, seed, margin)?;
        write(min_rank, report.min_rank, "min_rank")?;
        write(passed, report.passed, "passed")
    })
}

/// Tangency check for gap `j` on `samples` boundary points.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_check_tangency(
    family: *const NbcFamily,
    j: usize,
    samples: usize,
    seed: u64,
    max_residual: *mut f64,
    passed: *mut bool,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        let report = verify::check_tangency(f, j, samples, seed)?;
        write(max_residual, report.max_residual, "max_residual")?;
        write(passed, report.passed, "passed")
    })
}

/// Parses a schedule from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_schedule_from_json(
    json: *const c_char,
    out: *mut *mut NbcSchedule,
) -> NbcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| invalid(format!("json is not UTF-8: {e}")))?;
        let schedule = ControlSchedule::from_json(text)?;
        write(out, Box::into_raw(Box::new(NbcSchedule(schedule))), "out")
    })
}

/// JSON form of a schedule; free with [`nbc_string_free`].
///
/// # Safety
/// `schedule` must be valid; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nbc_schedule_to_json(
    schedule: *const NbcSchedule,
    out: *mut *mut c_char,
) -> NbcStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        write(out, into_string(s.0.to_json()?), "out")
    })
}

/// # Safety
/// `schedule` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nbc_schedule_free(schedule: *mut NbcSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Endpoint of the flow from `p` under `schedule`. A `step` of zero or less
/// selects the default step.
///
/// # Safety
/// `p` and `out` must hold `n` doubles; `schedule` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_endpoint(
    family: *const NbcFamily,
    p: *const f64,
    n: usize,
    schedule: *const NbcSchedule,
    step: f64,
    out: *mut f64,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        let s = &schedule.as_ref().ok_or_else(|| null("schedule"))?.0;
        let step = if step > 0.0 {
            step
        } else {
            sim::default_step(s)
        };
        let x = sim::endpoint(f, input(p, n, "p")?, s, step)?;
        output(out, n, "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Plans from `p` to `q` (angles on the circle). On non-convergence the
/// best plan found is still written to `out` together with the status.
///
/// # Safety
/// `p` and `q` must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan(
    family: *const NbcFamily,
    p: *const f64,
    q: *const f64,
    n: usize,
    tol: f64,
    max_iter: usize,
    out: *mut *mut NbcPlan,
) -> NbcStatus {
    guard(|| {
        let f = family_ref(family)?;
        state_len(f, n)?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let (p, q) = (input(p, n, "p")?, input(q, n, "q")?);
        let store = |plan: PlanResult| out.write(Box::into_raw(Box::new(NbcPlan(plan))));
        match plan::plan(f, p, q, tol, max_iter) {
            Ok(result) => {
                store(result);
                Ok(())
            }
            Err(err) => {
                let fail = err_ref(&err);
                if let Error::NotConverged { best } | Error::DampingUnderflow { best } = err {
                    store(*best);
                }
                Err(fail)
            }
        }
    })
}

/// # Safety
/// `plan` must come from [`nbc_plan`] or be null.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_free(plan: *mut NbcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Endpoint error, iteration count and minimum gap along the plan.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_summary(
    plan: *const NbcPlan,
    endpoint_error: *mut f64,
    iterations: *mut usize,
    min_gap: *mut f64,
) -> NbcStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.0;
        write(endpoint_error, p.endpoint_error, "endpoint_error")?;
        write(iterations, p.iterations, "iterations")?;
        write(min_gap, p.min_gap_along_plan, "min_gap")
    })
}

/// Achieved endpoint of the plan in lifted coordinates (length `n`).
///
/// # Safety
/// `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_endpoint(
    plan: *const NbcPlan,
    n: usize,
    out: *mut f64,
) -> NbcStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.0;
        if n != p.achieved_endpoint.len() {
            return Err(Error::DimensionMismatch {
                expected: p.achieved_endpoint.len(),
                got: n,
            }
            .into());
        }
        output(out, n, "out")?.copy_from_slice(&p.achieved_endpoint);
        Ok(())
    })
}

/// Copy of the plan's control schedule.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_schedule(
    plan: *const NbcPlan,
    out: *mut *mut NbcSchedule,
) -> NbcStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.0;
        write(
            out,
            Box::into_raw(Box::new(NbcSchedule(p.schedule.clone()))),
            "out",
        )
    })
}

/// Integration step the plan was verified with.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_step(plan: *const NbcPlan, step: *mut f64) -> NbcStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.0;
        write(step, p.step, "step")
    })
}

/// JSON form of the plan; free with [`nbc_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nbc_plan_to_json(
    plan: *const NbcPlan,
    out: *mut *mut c_char,
) -> NbcStatus {
    guard(|| {
        let p = &plan.as_ref().ok_or_else(|| null("plan"))?.0;
        let text = serde_json::to_string(p).map_err(|e| invalid(e.to_string()))?;
        write(out, into_string(text), "out")
    })
}
