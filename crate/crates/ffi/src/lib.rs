//! C ABI over the `statcare` estimators.
//!
//! Every fallible call returns a [`StcStatus`]; on failure the message is
//! kept per thread and can be fetched with [`stc_last_error`]. Models, paths
//! and estimates are opaque handles released with their `_free` function.
//! Matrices cross the boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use statcare::estimation::{estimate_h_continuous, estimate_theta_discrete, EstimateResult};
use statcare::linalg::Mat;
use statcare::models::{simulate_ou, simulate_var1, simulate_varma1q, Driver, ModelKind, ModelSpec, Path};
use statcare::riccati::{solve_care, CareCoefficients, CoeffProvenance};
use statcare::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidModel = 3,
    Domain = 4,
    NoSolution = 5,
    Degenerate = 6,
    NoRealSolution = 7,
    Config = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

impl From<&Error> for StcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => StcStatus::InvalidInput,
            Error::InvalidModel(_) => StcStatus::InvalidModel,
            Error::Domain { .. } => StcStatus::Domain,
            Error::NoSolution { .. } => StcStatus::NoSolution,
            Error::Degenerate(_) => StcStatus::Degenerate,
            Error::NoRealSolution { .. } => StcStatus::NoRealSolution,
            Error::UnknownSuite { .. } | Error::Config(_) => StcStatus::Config,
            Error::Io(_) => StcStatus::Io,
            Error::Json(_) => StcStatus::Json,
        }
    }
}

/// Opaque generating model.
pub struct StcModel(ModelSpec);

/// Opaque observed or simulated path.
pub struct StcPath(Path);

/// Opaque estimation result.
pub struct StcEstimate(EstimateResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(StcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(StcStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StcStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            StcStatus::Panic
        }
    }
}

unsafe fn matrix(ptr: *const f64, rows: usize, cols: usize, what: &str) -> Result<Mat, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    let data = slice::from_raw_parts(ptr, rows * cols);
    Ok(Mat::from_row_slice(rows, cols, data))
}

unsafe fn write_matrix(m: &Mat, out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err(Fail(StcStatus::InvalidInput, format!("output buffer holds {len} values, need {need}")));
    }
    let out = slice::from_raw_parts_mut(out, need);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output string"));
    }
    *out = CString::new(s).map_err(|e| Fail(StcStatus::InvalidInput, e.to_string()))?.into_raw();
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn stc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn stc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// VAR(1) model `X_k = Φ X_{k-1} + ε_k` with Gaussian innovations of covariance `Σ`.
///
/// # Safety
/// `phi` and `sigma` point to `n*n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_model_var1(
    n: usize,
    phi: *const f64,
    sigma: *const f64,
    out: *mut *mut StcModel,
) -> StcStatus {
    guard(|| {
        let spec = ModelSpec::var1(matrix(phi, n, n, "phi")?, matrix(sigma, n, n, "sigma")?);
        spec.validate()?;
        put(out, StcModel(spec))
    })
}

/// Ornstein-Uhlenbeck model `dX = −H X dt + dW` with `W` a Brownian motion of covariance `Σ`.
///
/// # Safety
/// `h` and `sigma` point to `n*n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_model_ou(
    n: usize,
    h: *const f64,
    sigma: *const f64,
    out: *mut *mut StcModel,
) -> StcStatus {
    guard(|| {
        let spec = ModelSpec::ou(matrix(h, n, n, "h")?, matrix(sigma, n, n, "sigma")?, Driver::Bm);
        spec.validate()?;
        put(out, StcModel(spec))
    })
}

/// Parses a model from the JSON form used by experiment configs.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_model_from_json(json: *const c_char, out: *mut *mut StcModel) -> StcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| Fail(StcStatus::InvalidInput, e.to_string()))?;
        let spec: ModelSpec = serde_json::from_str(text).map_err(Error::from)?;
        spec.validate()?;
        put(out, StcModel(spec))
    })
}

/// Serializes a model to JSON. Free the result with [`stc_string_free`].
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_model_to_json(model: *const StcModel, out: *mut *mut c_char) -> StcStatus {
    guard(|| {
        let m = get(model, "model")?;
        put_string(out, serde_json::to_string(&m.0).map_err(Error::from)?)
    })
}

/// Dimension of the model, 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stc_model_dim(model: *const StcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stc_model_free(model: *mut StcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates a path from `model`. Discrete models produce `len` observations
/// (`burn_in` 0 picks the model default); the Ornstein-Uhlenbeck model is
/// sampled on `[0, t_end]` with step `dt`, and `len`/`burn_in` are ignored.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_path_simulate(
    model: *const StcModel,
    len: usize,
    burn_in: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
    out: *mut *mut StcPath,
) -> StcStatus {
    guard(|| {
        let spec = &get(model, "model")?.0;
        let path = match spec.kind {
            ModelKind::OuCont => simulate_ou(spec, t_end, dt, seed)?,
            _ if len < 2 => return Err(Fail(StcStatus::InvalidInput, "len must be at least 2".into())),
            ModelKind::Var1 => simulate_var1(spec, len - 1, burn_in, seed)?,
            ModelKind::Varma1q => simulate_varma1q(spec, len - 1, burn_in, seed)?,
        };
        put(out, StcPath(path))
    })
}

/// Wraps `n × len` observations, stored observation after observation
/// (`values[k*n + i]` is coordinate `i` at step `k`). A positive `dt` makes a
/// path sampled from continuous time starting at 0; `dt <= 0` makes a
/// discrete path.
///
/// # Safety
/// `values` points to `n*len` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_path_from_values(
    n: usize,
    len: usize,
    values: *const f64,
    dt: f64,
    out: *mut *mut StcPath,
) -> StcStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let data = slice::from_raw_parts(values, n * len);
        let m = Mat::from_column_slice(n, len, data);
        let path = if dt > 0.0 { Path::sampled(m, 0.0, dt)? } else { Path::discrete(m, 0)? };
        put(out, StcPath(path))
    })
}

/// # Safety
/// `path` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stc_path_dim(path: *const StcPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.dim())
}

/// # Safety
/// `path` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stc_path_len(path: *const StcPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the observations in the layout of [`stc_path_from_values`].
///
/// # Safety
/// `path` is a live handle; `out` holds at least `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stc_path_values(path: *const StcPath, out: *mut f64, out_len: usize) -> StcStatus {
    guard(|| {
        let v = get(path, "path")?.0.values();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if out_len < v.len() {
            return Err(Fail(
                StcStatus::InvalidInput,
                format!("output buffer holds {out_len} values, need {}", v.len()),
            ));
        }
        slice::from_raw_parts_mut(out, v.len()).copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// # Safety
/// `path` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stc_path_free(path: *mut StcPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Estimates `Θ = I − Φ` from a discrete path with integer horizon `t` and
/// noise variance `v` (`n*n`, row-major) of the `t`-step noise sum.
///
/// # Safety
/// `path` is a live handle, `v` points to `n*n` doubles, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_discrete(
    path: *const StcPath,
    v: *const f64,
    t: usize,
    out: *mut *mut StcEstimate,
) -> StcStatus {
    guard(|| {
        let p = &get(path, "path")?.0;
        let v = matrix(v, p.dim(), p.dim(), "v")?;
        put(out, StcEstimate(estimate_theta_discrete(p, &v, t)?))
    })
}

/// Estimates the drift `H` from a sampled continuous path with horizon `t`
/// and noise variance `v = Var(G_t)`.
///
/// # Safety
/// `path` is a live handle, `v` points to `n*n` doubles, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_continuous(
    path: *const StcPath,
    v: *const f64,
    t: f64,
    out: *mut *mut StcEstimate,
) -> StcStatus {
    guard(|| {
        let p = &get(path, "path")?.0;
        let v = matrix(v, p.dim(), p.dim(), "v")?;
        put(out, StcEstimate(estimate_h_continuous(p, &v, t)?))
    })
}

/// # Safety
/// `est` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_dim(est: *const StcEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.estimate.nrows())
}

/// Whether the positive-definiteness gates passed. A failed gate leaves the
/// estimate at zero.
///
/// # Safety
/// `est` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_gate_passed(est: *const StcEstimate) -> bool {
    est.as_ref().is_some_and(|e| e.0.gate_passed)
}

/// Copies the estimated matrix (row-major).
///
/// # Safety
/// `est` is a live handle; `out` holds at least `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_matrix(est: *const StcEstimate, out: *mut f64, out_len: usize) -> StcStatus {
    guard(|| write_matrix(&get(est, "estimate")?.0.estimate, out, out_len))
}

/// Serializes the full result, diagnostics included. Free with [`stc_string_free`].
///
/// # Safety
/// `est` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_to_json(est: *const StcEstimate, out: *mut *mut c_char) -> StcStatus {
    guard(|| {
        let e = get(est, "estimate")?;
        put_string(out, serde_json::to_string(&e.0).map_err(Error::from)?)
    })
}

/// # Safety
/// `est` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stc_estimate_free(est: *mut StcEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Solves `BᵀX + XB − XCX + D = 0` for the stabilizing symmetric positive
/// semidefinite `X`. All matrices are `n*n`, row-major. `residual` may be null.
///
/// # Safety
/// `b`, `c`, `d` point to `n*n` doubles, `x` is writable for `n*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn stc_solve_care(
    n: usize,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    x: *mut f64,
    residual: *mut f64,
) -> StcStatus {
    guard(|| {
        let coeffs = CareCoefficients::new(
            matrix(b, n, n, "b")?,
            matrix(c, n, n, "c")?,
            matrix(d, n, n, "d")?,
            1.0,
            CoeffProvenance::Discrete,
        )?;
        let sol = solve_care(&coeffs)?;
        write_matrix(&sol.x, x, n * n)?;
        if !residual.is_null() {
            *residual = sol.residual_norm;
        }
        Ok(())
    })
}
