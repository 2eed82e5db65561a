//! C ABI over the `diffcoef` estimators.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! constructor such as `dc_model_constant` or `dc_simulate` and released by
//! the matching `dc_*_free`.
//! Fallible calls return a [`DcStatus`] and write their result through an
//! out-pointer; the message of the last failure on the calling thread is
//! available from [`dc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use diffcoef::basis::BasisSpec;
use diffcoef::estimator::{self, ConstraintBall};
use diffcoef::model::DiffusionModel;
use diffcoef::regression::build_regression;
use diffcoef::simulate::{simulate_sample, PathSample};

/// Result codes. 1 to 3 match the exit codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcBasisFamily {
    Spline = 0,
    Fourier = 1,
}

/// Basis on [a, b]. `family` holds a `DcBasisFamily` value. `size` is the
/// knot count K for splines and the number of frequencies D for the
/// trigonometric basis; `degree` is ignored there.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DcBasis {
    pub family: u32,
    pub size: usize,
    pub degree: usize,
    pub a: f64,
    pub b: f64,
}

/// A diffusion model.
pub struct DcModel(DiffusionModel);

/// N discretely observed paths.
pub struct DcSample(PathSample);

/// A fitted projection estimate of sigma^2.
pub struct DcEstimate(estimator::Estimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DcStatus, msg: impl Into<String>) -> DcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: diffcoef::Error) -> DcStatus {
    let status = match e.exit_code() {
        2 => DcStatus::Config,
        3 => DcStatus::Numerical,
        _ => DcStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `DcStatus::Panic`.
fn guard(f: impl FnOnce() -> DcStatus) -> DcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DcStatus::Panic, msg)
        }
    }
}

/// Moves `value` to the heap and stores it in `*out`.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> DcStatus {
    *out = Box::into_raw(Box::new(value));
    DcStatus::Ok
}

macro_rules! check_out {
    ($out:expr) => {
        if $out.is_null() {
            return fail(DcStatus::NullPointer, concat!(stringify!($out), " is null"));
        }
    };
}

macro_rules! deref {
    ($ptr:expr) => {
        match $ptr.as_ref() {
            Some(v) => v,
            None => return fail(DcStatus::NullPointer, concat!(stringify!($ptr), " is null")),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Brownian motion with constant diffusion coefficient `sigma > 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_model_constant(sigma: f64, out: *mut *mut DcModel) -> DcStatus {
    guard(|| {
        check_out!(out);
        if !(sigma > 0.0 && sigma.is_finite()) {
            return fail(DcStatus::InvalidArgument, format!("sigma must be positive and finite (got {sigma})"));
        }
        emit(out, DcModel(DiffusionModel::constant(sigma)))
    })
}

/// The bounded example model with periodic drift.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_model_example(out: *mut *mut DcModel) -> DcStatus {
    guard(|| {
        check_out!(out);
        emit(out, DcModel(DiffusionModel::example()))
    })
}

/// sigma(x)^2 of the model.
///
/// # Safety
/// `model` must come from a `dc_model_*` constructor and `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_model_sigma_sq(model: *const DcModel, x: f64, out: *mut f64) -> DcStatus {
    guard(|| {
        let model = deref!(model);
        check_out!(out);
        *out = model.0.sigma_sq(x);
        DcStatus::Ok
    })
}

/// # Safety
/// `model` must be null or come from a `dc_model_*` constructor, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_model_free(model: *mut DcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `n_paths` paths of `n` steps on [0, 1] with `substeps` Euler
/// steps per observation interval.
///
/// # Safety
/// `model` must come from a `dc_model_*` constructor and `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_simulate(
    model: *const DcModel,
    n_paths: usize,
    n: usize,
    substeps: usize,
    seed: u64,
    out: *mut *mut DcSample,
) -> DcStatus {
    guard(|| {
        let model = deref!(model);
        check_out!(out);
        match simulate_sample(&model.0, n_paths, n, substeps, seed) {
            Ok(s) => emit(out, DcSample(s)),
            Err(e) => from_error(e),
        }
    })
}

/// Wraps observed paths given row-major as `n_paths` rows of `n + 1` values
/// X_0, ..., X_n on the grid k / n.
///
/// # Safety
/// `values` must point to `n_paths * (n + 1)` readable doubles and `out` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_sample_from_values(
    values: *const f64,
    n_paths: usize,
    n: usize,
    out: *mut *mut DcSample,
) -> DcStatus {
    guard(|| {
        check_out!(out);
        if values.is_null() {
            return fail(DcStatus::NullPointer, "values is null");
        }
        let Some(len) = n.checked_add(1).and_then(|l| l.checked_mul(n_paths)) else {
            return fail(DcStatus::InvalidArgument, "sample size overflows");
        };
        let flat = std::slice::from_raw_parts(values, len);
        let rows: Vec<Vec<f64>> = flat.chunks(n + 1).map(<[f64]>::to_vec).collect();
        match PathSample::from_rows(&rows, 0) {
            Ok(s) => emit(out, DcSample(s)),
            Err(e) => from_error(e),
        }
    })
}

/// Number of paths N and steps n of the sample.
///
/// # Safety
/// `sample` must come from `dc_simulate` or `dc_sample_from_values`; the
/// out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_sample_shape(sample: *const DcSample, n_paths: *mut usize, n: *mut usize) -> DcStatus {
    guard(|| {
        let sample = deref!(sample);
        check_out!(n_paths);
        check_out!(n);
        *n_paths = sample.0.n_paths;
        *n = sample.0.n;
        DcStatus::Ok
    })
}

/// Copies the N (n + 1) observations, row-major, into `buf`.
///
/// # Safety
/// `sample` must be a live sample handle and `buf` must hold `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_sample_values(sample: *const DcSample, buf: *mut f64, len: usize) -> DcStatus {
    guard(|| {
        let sample = deref!(sample);
        check_out!(buf);
        let values = &sample.0.values;
        if len < values.len() {
            return fail(DcStatus::InvalidArgument, format!("buffer holds {len} values, need {}", values.len()));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        DcStatus::Ok
    })
}

/// # Safety
/// `sample` must be null or a live sample handle, and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_sample_free(sample: *mut DcSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

fn basis_spec(b: &DcBasis) -> diffcoef::Result<BasisSpec> {
    match b.family {
        f if f == DcBasisFamily::Spline as u32 => BasisSpec::spline(b.size, b.degree, b.a, b.b),
        f if f == DcBasisFamily::Fourier as u32 => BasisSpec::fourier(b.size, b.a, b.b),
        f => Err(diffcoef::Error::InvalidArgument(format!("unknown basis family {f}"))),
    }
}

/// Least-squares projection estimate of sigma^2 on `basis`, restricted to the
/// coefficient ball m (B - A)^2 log(Nn) when `constrained` is true.
///
/// # Safety
/// `sample` must be a live sample handle, `basis` must point to a valid
/// `DcBasis` and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate(
    sample: *const DcSample,
    basis: *const DcBasis,
    constrained: bool,
    out: *mut *mut DcEstimate,
) -> DcStatus {
    guard(|| {
        let sample = deref!(sample);
        let basis = deref!(basis);
        check_out!(out);
        let run = || -> diffcoef::Result<estimator::Estimate> {
            let spec = basis_spec(basis)?;
            let data = build_regression(&sample.0)?;
            let ball = ConstraintBall::for_data(&spec, &data);
            estimator::fit(&data, &spec, constrained.then_some(&ball))
        };
        match run() {
            Ok(est) => emit(out, DcEstimate(est)),
            Err(e) => from_error(e),
        }
    })
}

/// Copy of `est` whose evaluations are capped from above at log `n_paths`.
///
/// # Safety
/// `est` must be a live estimate handle and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate_truncate(
    est: *const DcEstimate,
    n_paths: usize,
    out: *mut *mut DcEstimate,
) -> DcStatus {
    guard(|| {
        let est = deref!(est);
        check_out!(out);
        match estimator::truncate(&est.0, n_paths) {
            Ok(t) => emit(out, DcEstimate(t)),
            Err(e) => from_error(e),
        }
    })
}

/// Basis dimension m of the estimate.
///
/// # Safety
/// `est` must be a live estimate handle and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate_dim(est: *const DcEstimate, out: *mut usize) -> DcStatus {
    guard(|| {
        let est = deref!(est);
        check_out!(out);
        *out = est.0.coeffs.len();
        DcStatus::Ok
    })
}

/// Copies the m coefficients into `buf`.
///
/// # Safety
/// `est` must be a live estimate handle and `buf` must hold `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate_coeffs(est: *const DcEstimate, buf: *mut f64, len: usize) -> DcStatus {
    guard(|| {
        let est = deref!(est);
        check_out!(buf);
        let c = &est.0.coeffs;
        if len < c.len() {
            return fail(DcStatus::InvalidArgument, format!("buffer holds {len} values, need {}", c.len()));
        }
        ptr::copy_nonoverlapping(c.as_ptr(), buf, c.len());
        DcStatus::Ok
    })
}

/// Evaluates the estimate at `count` points. Points outside [A, B] give 0.
///
/// # Safety
/// `est` must be a live estimate handle, `xs` must hold `count` readable
/// doubles and `out` must hold `count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate_eval(
    est: *const DcEstimate,
    xs: *const f64,
    count: usize,
    out: *mut f64,
) -> DcStatus {
    guard(|| {
        let est = deref!(est);
        if count == 0 {
            return DcStatus::Ok;
        }
        check_out!(xs);
        check_out!(out);
        let mut ev = match est.0.evaluator() {
            Ok(ev) => ev,
            Err(e) => return from_error(e),
        };
        let xs = std::slice::from_raw_parts(xs, count);
        let out = std::slice::from_raw_parts_mut(out, count);
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = ev.eval(x);
        }
        DcStatus::Ok
    })
}

/// # Safety
/// `est` must be null or a live estimate handle, and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_estimate_free(est: *mut DcEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
