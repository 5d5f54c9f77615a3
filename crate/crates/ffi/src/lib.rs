//! C ABI over the `fairsel` library.
//!
//! Every fallible function returns a [`FairselStatus`] and writes its
//! product through an out-pointer. On failure the message is available from
//! [`fairsel_last_error`] on the same thread until the next failing call.
//! Handles are opaque; release each with its `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fairsel::dataset::Dataset;
use fairsel::eval::{evaluate_selection, EvalOptions};
use fairsel::fufs::{optimize, FufsConfig, SelectionResult, StepPolicy};
use fairsel::kernel::KernelSpec;
use fairsel::{load_csv, ErrorClass, FairselError, SyntheticSpec};
use ndarray::Array2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FairselStatus {
    Ok = 0,
    ConfigError = 1,
    DataError = 2,
    NumericError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque dataset handle.
pub struct FairselDataset(Dataset);

/// Opaque optimizer configuration handle.
pub struct FairselConfig(FufsConfig);

/// Opaque selection result handle.
pub struct FairselResult(SelectionResult);

impl FairselDataset {
    pub fn inner(&self) -> &Dataset {
        &self.0
    }
}

impl FairselConfig {
    pub fn inner(&self) -> &FufsConfig {
        &self.0
    }
}

impl FairselResult {
    pub fn inner(&self) -> &SelectionResult {
        &self.0
    }
}

/// Clustering scores; `acc` and `nmi` are NaN when not computed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairselMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub balance: f64,
    pub proportion: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(err: FairselError) -> FairselStatus {
    set_error(err.to_string());
    match err.class() {
        ErrorClass::Config => FairselStatus::ConfigError,
        ErrorClass::Data => FairselStatus::DataError,
        ErrorClass::Numeric => FairselStatus::NumericError,
    }
}

fn null(what: &str) -> FairselStatus {
    set_error(format!("null pointer: {what}"));
    FairselStatus::NullPointer
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FairselStatus>) -> FairselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FairselStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            FairselStatus::Panic
        }
    }
}

fn lift<T>(r: fairsel::Result<T>) -> Result<T, FairselStatus> {
    r.map_err(fail)
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, FairselStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(FairselError::InvalidData(format!(
            "{what} is not valid UTF-8"
        )))
    })
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], FairselStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), FairselStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, FairselStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, FairselStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fairsel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fairsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from row-major buffers: `x` is `d x n` (one row per
/// feature), `p_mat` is `p x n`. `labels` may be NULL, otherwise it holds
/// `n` cluster ids.
///
/// # Safety
/// Buffers must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_dataset_from_arrays(
    x: *const f64,
    d: usize,
    n: usize,
    p_mat: *const f64,
    p: usize,
    labels: *const usize,
    out: *mut *mut FairselDataset,
) -> FairselStatus {
    guard(|| {
        let xs = slice(x, d * n, "x")?.to_vec();
        let ps = slice(p_mat, p * n, "p_mat")?.to_vec();
        let labels = if labels.is_null() {
            None
        } else {
            Some(slice(labels, n, "labels")?.to_vec())
        };
        let shape_err = |e: ndarray::ShapeError| fail(FairselError::Shape(e.to_string()));
        let x = Array2::from_shape_vec((d, n), xs).map_err(shape_err)?;
        let p_mat = Array2::from_shape_vec((p, n), ps).map_err(shape_err)?;
        let ds = lift(Dataset::new(x, p_mat, labels))?;
        store(out, FairselDataset(ds))
    })
}

/// Reads an instance-per-row CSV. `protected` is a comma-separated list of
/// column names; `label` may be NULL.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_dataset_from_csv(
    path: *const c_char,
    protected: *const c_char,
    label: *const c_char,
    standardize: bool,
    out: *mut *mut FairselDataset,
) -> FairselStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        let protected: Vec<String> = c_str(protected, "protected")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let label = if label.is_null() {
            None
        } else {
            Some(c_str(label, "label")?)
        };
        let ds = lift(load_csv(&path, &protected, label, standardize))?;
        store(out, FairselDataset(ds))
    })
}

/// Generates a synthetic dataset with utility, sensitive and noise features.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_dataset_synthetic(
    n: usize,
    n_utility: usize,
    n_sensitive: usize,
    n_noise: usize,
    cluster_separation: f64,
    sensitive_correlation: f64,
    seed: u64,
    standardize: bool,
    out: *mut *mut FairselDataset,
) -> FairselStatus {
    guard(|| {
        let spec = SyntheticSpec {
            n,
            n_utility,
            n_sensitive,
            n_noise,
            cluster_separation,
            sensitive_correlation,
            seed,
        };
        let mut ds = lift(fairsel::generate_synthetic(&spec))?.dataset;
        if standardize {
            ds.standardize();
        }
        store(out, FairselDataset(ds))
    })
}

/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_dataset_dims(
    ds: *const FairselDataset,
    d: *mut usize,
    n: *mut usize,
    p: *mut usize,
) -> FairselStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        for (out, v) in [(d, ds.d()), (n, ds.n()), (p, ds.p())] {
            if let Some(out) = out.as_mut() {
                *out = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fairsel_dataset_free(ds: *mut FairselDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Default configuration selecting `k` features. Never returns NULL.
#[no_mangle]
pub extern "C" fn fairsel_config_new(k: usize) -> *mut FairselConfig {
    Box::into_raw(Box::new(FairselConfig(FufsConfig::new(k))))
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_free(cfg: *mut FairselConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn set_field(cfg: *mut FairselConfig, f: impl FnOnce(&mut FufsConfig)) -> FairselStatus {
    guard(|| {
        f(&mut handle_mut(cfg, "config")?.0);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_alpha(
    cfg: *mut FairselConfig,
    value: f64,
) -> FairselStatus {
    set_field(cfg, |c| c.alpha = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_beta(
    cfg: *mut FairselConfig,
    value: f64,
) -> FairselStatus {
    set_field(cfg, |c| c.beta = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_k(
    cfg: *mut FairselConfig,
    value: usize,
) -> FairselStatus {
    set_field(cfg, |c| c.k = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_l(
    cfg: *mut FairselConfig,
    value: usize,
) -> FairselStatus {
    set_field(cfg, |c| c.l = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_eta(
    cfg: *mut FairselConfig,
    value: f64,
) -> FairselStatus {
    set_field(cfg, |c| c.eta = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_max_iter(
    cfg: *mut FairselConfig,
    value: usize,
) -> FairselStatus {
    set_field(cfg, |c| c.max_iter = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_tol(
    cfg: *mut FairselConfig,
    value: f64,
) -> FairselStatus {
    set_field(cfg, |c| c.tol = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_seed(
    cfg: *mut FairselConfig,
    value: u64,
) -> FairselStatus {
    set_field(cfg, |c| c.seed = value)
}

/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_ablate_g(
    cfg: *mut FairselConfig,
    value: bool,
) -> FairselStatus {
    set_field(cfg, |c| c.ablate_g = value)
}

/// Switches between a fixed step (`true`) and backtracking line search.
///
/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_fixed_step(
    cfg: *mut FairselConfig,
    fixed: bool,
) -> FairselStatus {
    guard(|| {
        handle_mut(cfg, "config")?.0.step_policy = if fixed {
            StepPolicy::Fixed
        } else {
            StepPolicy::backtracking()
        };
        Ok(())
    })
}

/// Selects the kernel: linear when `linear` is true, otherwise rbf with
/// bandwidth `sigma`, or the median heuristic when `sigma <= 0`.
///
/// # Safety
/// `cfg` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_config_set_kernel(
    cfg: *mut FairselConfig,
    linear: bool,
    sigma: f64,
) -> FairselStatus {
    guard(|| {
        handle_mut(cfg, "config")?.0.kernel = match (linear, sigma > 0.0) {
            (true, _) => KernelSpec::linear(),
            (false, true) => KernelSpec::rbf_fixed(sigma),
            (false, false) => KernelSpec::rbf(),
        };
        Ok(())
    })
}

/// Runs the optimizer.
///
/// # Safety
/// `ds` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_select(
    ds: *const FairselDataset,
    cfg: *const FairselConfig,
    out: *mut *mut FairselResult,
) -> FairselStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        let cfg = &handle(cfg, "config")?.0;
        let result = lift(optimize(ds, cfg))?;
        store(out, FairselResult(result))
    })
}

/// # Safety
/// `res` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_free(res: *mut FairselResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of features `d` of the result.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_d(res: *const FairselResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.indicators.d())
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_selected_len(res: *const FairselResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.selected.len())
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_flagged_len(res: *const FairselResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.flagged_sensitive.len())
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_iterations(res: *const FairselResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_converged(res: *const FairselResult) -> bool {
    res.as_ref().is_some_and(|r| r.0.converged)
}

/// Final objective value, NaN for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_objective(res: *const FairselResult) -> f64 {
    res.as_ref()
        .and_then(|r| r.0.trajectory.last())
        .map_or(f64::NAN, |t| t.total)
}

unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize) -> Result<(), FairselStatus> {
    if cap < src.len() {
        return Err(fail(FairselError::Shape(format!(
            "buffer holds {cap} elements, {} needed",
            src.len()
        ))));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

/// Copies the selected feature indices (best first) into `buf`.
///
/// # Safety
/// `buf` must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_selected(
    res: *const FairselResult,
    buf: *mut usize,
    cap: usize,
) -> FairselStatus {
    guard(|| copy_out(&handle(res, "result")?.0.selected, buf, cap))
}

/// Copies the indices flagged as sensitive into `buf`.
///
/// # Safety
/// `buf` must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_flagged(
    res: *const FairselResult,
    buf: *mut usize,
    cap: usize,
) -> FairselStatus {
    guard(|| copy_out(&handle(res, "result")?.0.flagged_sensitive, buf, cap))
}

/// Copies the final `m` and `g` vectors; either buffer may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_indicators(
    res: *const FairselResult,
    m: *mut f64,
    g: *mut f64,
    cap: usize,
) -> FairselStatus {
    guard(|| {
        let pair = &handle(res, "result")?.0.indicators;
        if !m.is_null() {
            copy_out(&pair.m, m, cap)?;
        }
        if !g.is_null() {
            copy_out(&pair.g, g, cap)?;
        }
        Ok(())
    })
}

/// Serializes the result as JSON. Free the string with
/// [`fairsel_string_free`].
///
/// # Safety
/// `res` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_result_to_json(
    res: *const FairselResult,
    out: *mut *mut c_char,
) -> FairselStatus {
    guard(|| {
        let json =
            lift(serde_json::to_string(&handle(res, "result")?.0).map_err(FairselError::from))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(json).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fairsel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Clusters the instances on the given features with k-means and scores
/// the partition. `clusters == 0` uses the number of distinct labels. ACC
/// and NMI are computed only when `utility` is true.
///
/// # Safety
/// `selected` must hold `len` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fairsel_evaluate(
    ds: *const FairselDataset,
    selected: *const usize,
    len: usize,
    clusters: usize,
    restarts: usize,
    seed: u64,
    utility: bool,
    out: *mut FairselMetrics,
) -> FairselStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        let selected = slice(selected, len, "selected")?;
        let opts = EvalOptions {
            clusters: (clusters > 0).then_some(clusters),
            restarts,
            seed,
            utility,
            ..Default::default()
        };
        let report = lift(evaluate_selection(ds, selected, &opts))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FairselMetrics {
            acc: report.acc.unwrap_or(f64::NAN),
            nmi: report.nmi.unwrap_or(f64::NAN),
            balance: report.balance,
            proportion: report.proportion,
        };
        Ok(())
    })
}
