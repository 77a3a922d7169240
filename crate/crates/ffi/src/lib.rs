//! C ABI over `bifunc-mpc`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! constructor and released by the matching `bm_*_free`.
//! Fallible calls return a [`BmErrorCode`]; the message of the most recent
//! failure on the calling thread is available from [`bm_last_error_message`].
//! Matrices are passed as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bifunc_mpc::bifunction::{self, ExtendedValue, QuadBifunction};
use bifunc_mpc::problem::{Problem, ProblemSpec};
use bifunc_mpc::qp::FlatQP;
use bifunc_mpc::{diagram, sim, solver, Error, Solution, Status};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmErrorCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Dimension = 4,
    InvalidProblem = 5,
    MaxIter = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Optimal = 0,
    PrimalInfeasible = 1,
    Unbounded = 2,
    MaxIter = 3,
}

/// Kind of an extended-real value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmValueKind {
    Finite = 0,
    PlusInfinity = 1,
    MinusInfinity = 2,
}

/// A parsed problem document.
pub struct BmProblem {
    inner: Problem,
}

/// Result of solving a problem's compiled QP.
pub struct BmSolution {
    qp: FlatQP,
    sol: Solution,
}

/// A quadratic bifunction.
pub struct BmBifunction {
    inner: QuadBifunction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> BmErrorCode {
    match e {
        Error::Schema(_) => BmErrorCode::Schema,
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange(_) => BmErrorCode::Dimension,
        Error::SolverMaxIter { .. } => BmErrorCode::MaxIter,
        Error::Io(_) => BmErrorCode::Io,
        _ => BmErrorCode::InvalidProblem,
    }
}

fn fail(code: BmErrorCode, msg: impl Into<String>) -> BmErrorCode {
    set_error(msg.into());
    code
}

fn from_lib(e: Error) -> BmErrorCode {
    fail(code_of(&e), e.to_string())
}

/// Runs `f`, converting panics into [`BmErrorCode::Panic`].
fn guard(f: impl FnOnce() -> BmErrorCode) -> BmErrorCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(BmErrorCode::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, BmErrorCode> {
    if s.is_null() {
        return Err(fail(BmErrorCode::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(BmErrorCode::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize) -> Result<&'a [f64], BmErrorCode> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(BmErrorCode::NullPointer, "null array argument"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn matrix_arg(data: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, BmErrorCode> {
    let s = slice_arg(data, rows * cols)?;
    Ok(DMatrix::from_row_slice(rows, cols, s))
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> BmErrorCode {
    *out = Box::into_raw(Box::new(value));
    BmErrorCode::Ok
}

unsafe fn string_out(out: *mut *mut c_char, s: String) -> BmErrorCode {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            BmErrorCode::Ok
        }
        Err(_) => fail(BmErrorCode::InvalidProblem, "output contains a NUL byte"),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(code) => return code,
        }
    };
}

macro_rules! try_lib {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_lib(e),
        }
    };
}

macro_rules! check_null {
    ($($p:expr),*) => {
        $( if $p.is_null() { return fail(BmErrorCode::NullPointer, concat!("null argument: ", stringify!($p))); } )*
    };
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a JSON problem document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_from_json(json: *const c_char, out: *mut *mut BmProblem) -> BmErrorCode {
    guard(|| {
        check_null!(out);
        let text = try_ffi!(str_arg(json));
        let spec = try_lib!(ProblemSpec::from_json(text));
        let inner = try_lib!(spec.to_problem());
        out_ptr(out, BmProblem { inner })
    })
}

/// Reads and parses a JSON problem file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_from_file(path: *const c_char, out: *mut *mut BmProblem) -> BmErrorCode {
    guard(|| {
        check_null!(out);
        let path = try_ffi!(str_arg(path));
        let spec = try_lib!(ProblemSpec::from_file(std::path::Path::new(path)));
        let inner = try_lib!(spec.to_problem());
        out_ptr(out, BmProblem { inner })
    })
}

/// # Safety
/// `p` must come from `bm_problem_from_*` or be null.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_free(p: *mut BmProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_state_dim(p: *const BmProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.stage.state_dim())
}

/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_control_dim(p: *const BmProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.stage.control_dim())
}

/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_horizon(p: *const BmProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.horizon)
}

/// Replaces the initial state.
///
/// # Safety
/// `p` must be a live problem handle and `x0` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_set_initial_state(p: *mut BmProblem, x0: *const f64, len: usize) -> BmErrorCode {
    guard(|| {
        check_null!(p);
        let p = &mut *p;
        let n = p.inner.stage.state_dim();
        if len != n {
            return fail(BmErrorCode::Dimension, format!("initial state must have length {n}, got {len}"));
        }
        let x = try_ffi!(slice_arg(x0, len));
        p.inner.x0 = DVector::from_column_slice(x);
        BmErrorCode::Ok
    })
}

/// Sets the solver iteration cap.
///
/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_set_max_iter(p: *mut BmProblem, max_iter: usize) -> BmErrorCode {
    guard(|| {
        check_null!(p);
        if max_iter == 0 {
            return fail(BmErrorCode::InvalidProblem, "max_iter must be at least 1");
        }
        (*p).inner.solver.max_iter = max_iter;
        BmErrorCode::Ok
    })
}

unsafe fn solve_with(
    p: *const BmProblem,
    out: *mut *mut BmSolution,
    build: fn(&Problem) -> bifunc_mpc::Result<FlatQP>,
) -> BmErrorCode {
    guard(|| {
        check_null!(p, out);
        let p = &*p;
        let qp = try_lib!(build(&p.inner));
        let sol = try_lib!(solver::solve(&qp, &p.inner.solver));
        out_ptr(out, BmSolution { qp, sol })
    })
}

/// Compiles the problem compositionally and solves it. A non-optimal status
/// is not an error; inspect it with [`bm_solution_status`].
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_solve(p: *const BmProblem, out: *mut *mut BmSolution) -> BmErrorCode {
    solve_with(p, out, Problem::compositional)
}

/// Solves the directly transcribed QP of the same problem.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_solve_monolithic(p: *const BmProblem, out: *mut *mut BmSolution) -> BmErrorCode {
    solve_with(p, out, Problem::monolithic)
}

/// Compiled QP as JSON; release with [`bm_string_free`].
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_export_qp(p: *const BmProblem, out: *mut *mut c_char) -> BmErrorCode {
    guard(|| {
        check_null!(p, out);
        let qp = try_lib!((*p).inner.compositional());
        let json = try_lib!(qp.to_json());
        string_out(out, json)
    })
}

/// Wiring diagram in DOT; release with [`bm_string_free`].
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_export_dot(p: *const BmProblem, out: *mut *mut c_char) -> BmErrorCode {
    guard(|| {
        check_null!(p, out);
        string_out(out, diagram::to_dot(&(*p).inner))
    })
}

/// Closed-loop simulation log as CSV; release with [`bm_string_free`].
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_problem_simulate_csv(p: *const BmProblem, steps: usize, out: *mut *mut c_char) -> BmErrorCode {
    guard(|| {
        check_null!(p, out);
        let log = try_lib!(sim::simulate_problem(&(*p).inner, steps));
        string_out(out, log.to_csv())
    })
}

/// # Safety
/// `s` must come from a solve call or be null.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_free(s: *mut BmSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_status(s: *const BmSolution) -> BmStatus {
    match s.as_ref().map(|s| s.sol.status) {
        Some(Status::Optimal) => BmStatus::Optimal,
        Some(Status::PrimalInfeasible) => BmStatus::PrimalInfeasible,
        Some(Status::DualInfeasibleOrUnbounded) => BmStatus::Unbounded,
        Some(Status::MaxIter) | None => BmStatus::MaxIter,
    }
}

/// Objective value; NaN unless the status is optimal.
///
/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_objective(s: *const BmSolution) -> f64 {
    match s.as_ref() {
        Some(s) if s.sol.status == Status::Optimal => s.sol.objective,
        _ => f64::NAN,
    }
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_iterations(s: *const BmSolution) -> usize {
    s.as_ref().map_or(0, |s| s.sol.iterations)
}

/// Number of doubles [`bm_solution_controls`] writes.
///
/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_controls_len(s: *const BmSolution) -> usize {
    s.as_ref().map_or(0, |s| s.qp.controls(&s.sol.z).iter().map(|(_, u)| u.len()).sum())
}

/// Writes the control sequence, `u_0` first.
///
/// # Safety
/// `s` must be a live solution handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bm_solution_controls(s: *const BmSolution, buf: *mut f64, len: usize) -> BmErrorCode {
    guard(|| {
        check_null!(s, buf);
        let s = &*s;
        let flat: Vec<f64> = s.qp.controls(&s.sol.z).into_iter().flat_map(|(_, u)| u.iter().copied().collect::<Vec<_>>()).collect();
        if len < flat.len() {
            return fail(BmErrorCode::BufferTooSmall, format!("need {} doubles, got {len}", flat.len()));
        }
        std::slice::from_raw_parts_mut(buf, flat.len()).copy_from_slice(&flat);
        BmErrorCode::Ok
    })
}

/// Identity bifunction on `R^n`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_identity(n: usize, out: *mut *mut BmBifunction) -> BmErrorCode {
    guard(|| {
        check_null!(out);
        out_ptr(out, BmBifunction { inner: bifunction::identity(n) })
    })
}

/// Indicator of `x = A u + c`; `a` is `rows × cols` row-major, `c` may be null.
///
/// # Safety
/// `a` must hold `rows * cols` doubles, `c` null or `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_linear_map(
    a: *const f64,
    rows: usize,
    cols: usize,
    c: *const f64,
    out: *mut *mut BmBifunction,
) -> BmErrorCode {
    guard(|| {
        check_null!(out);
        let a = try_ffi!(matrix_arg(a, rows, cols));
        let c = if c.is_null() { None } else { Some(DVector::from_column_slice(try_ffi!(slice_arg(c, rows)))) };
        let inner = try_lib!(bifunction::from_linear_map(&a, c.as_ref()));
        out_ptr(out, BmBifunction { inner })
    })
}

/// `½ sᵀP s + qᵀs + r` over `s = (u; x)` with `u ∈ R^n_in`, `x ∈ R^n_out`.
///
/// # Safety
/// `p` must hold `k * k` and `q` `k` doubles, `k = n_in + n_out`.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_quadratic_cost(
    p: *const f64,
    q: *const f64,
    r: f64,
    n_in: usize,
    n_out: usize,
    out: *mut *mut BmBifunction,
) -> BmErrorCode {
    guard(|| {
        check_null!(out);
        let k = n_in + n_out;
        let pm = try_ffi!(matrix_arg(p, k, k));
        let qv = DVector::from_column_slice(try_ffi!(slice_arg(q, k)));
        let inner = try_lib!(bifunction::quadratic_cost(&pm, &qv, r, (n_in, n_out)));
        out_ptr(out, BmBifunction { inner })
    })
}

/// `g ∘ f`: apply `f`, then `g`.
///
/// # Safety
/// `g` and `f` must be live bifunction handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_compose(
    g: *const BmBifunction,
    f: *const BmBifunction,
    out: *mut *mut BmBifunction,
) -> BmErrorCode {
    guard(|| {
        check_null!(g, f, out);
        let inner = try_lib!(bifunction::compose(&(*g).inner, &(*f).inner));
        out_ptr(out, BmBifunction { inner })
    })
}

/// `f ⊕ g`.
///
/// # Safety
/// `f` and `g` must be live bifunction handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_oplus(
    f: *const BmBifunction,
    g: *const BmBifunction,
    out: *mut *mut BmBifunction,
) -> BmErrorCode {
    guard(|| {
        check_null!(f, g, out);
        out_ptr(out, BmBifunction { inner: bifunction::oplus(&(*f).inner, &(*g).inner) })
    })
}

/// # Safety
/// `f` must be a live bifunction handle.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_n_in(f: *const BmBifunction) -> usize {
    f.as_ref().map_or(0, |f| f.inner.n_in())
}

/// # Safety
/// `f` must be a live bifunction handle.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_n_out(f: *const BmBifunction) -> usize {
    f.as_ref().map_or(0, |f| f.inner.n_out())
}

/// `F(u, x)`. `value` receives the finite value (or ±inf) and `kind` its
/// classification.
///
/// # Safety
/// `u` and `x` must hold `nu` and `nx` doubles; `value` and `kind` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_evaluate(
    f: *const BmBifunction,
    u: *const f64,
    nu: usize,
    x: *const f64,
    nx: usize,
    value: *mut f64,
    kind: *mut BmValueKind,
) -> BmErrorCode {
    guard(|| {
        check_null!(f, value, kind);
        let u = DVector::from_column_slice(try_ffi!(slice_arg(u, nu)));
        let x = DVector::from_column_slice(try_ffi!(slice_arg(x, nx)));
        let v = try_lib!(bifunction::evaluate(&(*f).inner, &u, &x, &Default::default()));
        let (val, k) = match v {
            ExtendedValue::Finite(v) => (v, BmValueKind::Finite),
            ExtendedValue::PlusInfinity => (f64::INFINITY, BmValueKind::PlusInfinity),
            ExtendedValue::MinusInfinity => (f64::NEG_INFINITY, BmValueKind::MinusInfinity),
        };
        *value = val;
        *kind = k;
        BmErrorCode::Ok
    })
}

/// # Safety
/// `f` must come from a `bm_bifunction_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn bm_bifunction_free(f: *mut BmBifunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
