//! C ABI over `dlcr`.
//!
//! Objects are opaque handles created by `*_new`/`*_load`/`dlcr_fit` and
//! released by the matching `*_free`. Every function returns a [`DlcrStatus`];
//! on failure [`dlcr_last_error_message`] describes the error for the calling
//! thread. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dlcr::gibbs::{run_chain, PosteriorSamples, SamplerSchedule};
use dlcr::io::archive::write_archive;
use dlcr::io::tables::{load_dataset, DatasetPaths};
use dlcr::metrics::{auc_scores, posterior_predictive_new};
use dlcr::model::{Dataset, EntryKind, Hyperparams, ModelConfig};
use dlcr::postproc::{relabel, summarize, waic};
use dlcr::Error;
use nalgebra::DMatrix;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlcrStatus {
    Ok = 0,
    NullPointer = -1,
    /// Invalid configuration or argument.
    InvalidArgument = -2,
    /// Malformed, mis-shaped or out-of-support data.
    DataError = -3,
    /// A numerical failure inside the sampler.
    NumericError = -4,
    /// The requested quantity is undefined for the input.
    Undefined = -5,
    /// A panic was caught at the boundary.
    Panic = -6,
    /// File system failure.
    IoError = -7,
}

/// Observed outcomes with their covariates and meta-features.
pub struct DlcrDataset {
    data: Dataset,
    entries: Vec<EntryKind>,
}

/// A relabeled posterior sample from one chain.
pub struct DlcrFit {
    samples: PosteriorSamples,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DlcrStatus {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::TooManyAttributes { .. } | Error::Infeasible(_) => {
            DlcrStatus::InvalidArgument
        }
        Error::NotPositiveDefinite(_) | Error::NonFinite(_) => DlcrStatus::NumericError,
        Error::Io(_) => DlcrStatus::IoError,
        _ => DlcrStatus::DataError,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Undefined(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DlcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlcrStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            DlcrStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            DlcrStatus::InvalidArgument
        }
        Ok(Err(Failure::Undefined(msg))) => {
            set_error(msg);
            DlcrStatus::Undefined
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DlcrStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    let s = non_null(p, what)?;
    CStr::from_ptr(s).to_str().map(String::from).map_err(|_| Failure::Invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn optional_path(p: *const c_char, what: &'static str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        string(p, what).map(|s| Some(PathBuf::from(s)))
    }
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b).ok_or_else(|| Failure::Invalid("matrix size overflows".into()))
}

fn parse_entries(spec: Option<String>, p: usize) -> Result<Vec<EntryKind>, Failure> {
    match spec {
        None => Ok(vec![EntryKind::Binary; p]),
        Some(s) => {
            let e = s.split(',').map(|k| EntryKind::parse(k.trim())).collect::<Result<Vec<_>, _>>()?;
            if e.len() != p {
                return Err(Failure::Invalid(format!("{} entry kinds for {p} columns", e.len())));
            }
            Ok(e)
        }
    }
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dlcr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dlcr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from row-major arrays: `y` is `n × p`, `x` is `n × px`,
/// `t` is `p × pt`. `entries` is a comma-separated list of entry kinds
/// (`binary`, `count`, `categorical:D`) or null for all binary.
///
/// # Safety
/// Array pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_dataset_new(
    n: usize,
    p: usize,
    y: *const u32,
    px: usize,
    x: *const f64,
    pt: usize,
    t: *const f64,
    entries: *const c_char,
    out: *mut *mut DlcrDataset,
) -> DlcrStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let y = slice(y, checked_len(n, p)?, "y")?;
        let x = slice(x, checked_len(n, px)?, "x")?;
        let t = slice(t, checked_len(p, pt)?, "t")?;
        let spec = if entries.is_null() { None } else { Some(string(entries, "entries")?) };
        let entries = parse_entries(spec, p)?;
        let data = Dataset::new(
            DMatrix::from_row_slice(n, p, y),
            DMatrix::from_row_slice(n, px, x),
            DMatrix::from_row_slice(p, pt, t),
        )?;
        let config = ModelConfig { p, q: 1, d: 1, px, pt, entries: entries.clone() };
        data.validate(&config)?;
        *out = Box::into_raw(Box::new(DlcrDataset { data, entries }));
        Ok(())
    })
}

/// Loads a dataset from delimited tables with header rows. `x_path`, `t_path`
/// and `entries` may be null.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_dataset_load(
    y_path: *const c_char,
    x_path: *const c_char,
    t_path: *const c_char,
    entries: *const c_char,
    out: *mut *mut DlcrDataset,
) -> DlcrStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let paths = DatasetPaths {
            y: PathBuf::from(string(y_path, "y_path")?),
            x: optional_path(x_path, "x_path")?,
            t: optional_path(t_path, "t_path")?,
        };
        let spec = if entries.is_null() { None } else { Some(string(entries, "entries")?) };
        let kinds = spec.as_ref().map(|s| parse_entries(Some(s.clone()), s.split(',').count())).transpose()?;
        let data = load_dataset(&paths, kinds.as_deref())?;
        let entries = kinds.unwrap_or_else(|| vec![EntryKind::Binary; data.p()]);
        *out = Box::into_raw(Box::new(DlcrDataset { data, entries }));
        Ok(())
    })
}

/// Writes `N`, `p`, `p_x`, `p_t`; any output pointer may be null.
///
/// # Safety
/// `dataset` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_dataset_shape(
    dataset: *const DlcrDataset,
    n: *mut usize,
    p: *mut usize,
    px: *mut usize,
    pt: *mut usize,
) -> DlcrStatus {
    guard(|| {
        let d = &non_null(dataset, "dataset")?.data;
        for (ptr, v) in [(n, d.n()), (p, d.p()), (px, d.x.ncols()), (pt, d.t.ncols())] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dlcr_dataset_free(dataset: *mut DlcrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Runs one chain with `q` attributes and `d` classes under the default prior,
/// block updates and thinning `thin`, then relabels the retained draws.
///
/// # Safety
/// `dataset` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit(
    dataset: *const DlcrDataset,
    q: usize,
    d: usize,
    n_iters: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    out: *mut *mut DlcrFit,
) -> DlcrStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let data = &ds.data;
        let config =
            ModelConfig { p: data.p(), q, d, px: data.x.ncols(), pt: data.t.ncols(), entries: ds.entries.clone() };
        config.validate()?;
        let hyper = Hyperparams::default_for(&config);
        let mut schedule = SamplerSchedule::new(n_iters, burn_in, seed);
        schedule.thin = thin;
        let samples = run_chain(data, &config, &hyper, &schedule, None)?;
        let (samples, _) = relabel(&samples)?;
        *out = Box::into_raw(Box::new(DlcrFit { samples }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_free(fit: *mut DlcrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of retained draws.
///
/// # Safety
/// `fit` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_n_samples(fit: *const DlcrFit, out: *mut usize) -> DlcrStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = f.samples.len();
        Ok(())
    })
}

/// WAIC with its two components.
///
/// # Safety
/// `fit` must come from this library; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_waic(
    fit: *const DlcrFit,
    waic_out: *mut f64,
    lppd_out: *mut f64,
    p_waic_out: *mut f64,
) -> DlcrStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        if waic_out.is_null() || lppd_out.is_null() || p_waic_out.is_null() {
            return Err(Failure::Null("output"));
        }
        let w = waic(&f.samples.loglik)?;
        (*waic_out, *lppd_out, *p_waic_out) = (w.waic, w.lppd, w.p_waic);
        Ok(())
    })
}

/// Posterior class membership probabilities, `N × d` row-major into `buf`
/// of length `len`.
///
/// # Safety
/// `fit` must come from this library; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_class_probs(fit: *const DlcrFit, buf: *mut f64, len: usize) -> DlcrStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        let probs = summarize(&f.samples)?.class_probs;
        let buf = slice_mut(buf, len, "buf")?;
        if len != probs.len() {
            return Err(Failure::Invalid(format!("buffer holds {len} values, need {}", probs.len())));
        }
        for r in 0..probs.nrows() {
            for c in 0..probs.ncols() {
                buf[r * probs.ncols() + c] = probs[(r, c)];
            }
        }
        Ok(())
    })
}

/// Posterior predictive means for `n` new rows with covariates `x` (`n × px`
/// row-major), written `n × p` row-major into `buf` of length `len`.
///
/// # Safety
/// `fit` must come from this library; arrays must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_predict(
    fit: *const DlcrFit,
    n: usize,
    x: *const f64,
    px: usize,
    buf: *mut f64,
    len: usize,
) -> DlcrStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        let x = slice(x, checked_len(n, px)?, "x")?;
        let phat = posterior_predictive_new(&f.samples, &DMatrix::from_row_slice(n, px, x))?;
        let buf = slice_mut(buf, len, "buf")?;
        if len != phat.len() {
            return Err(Failure::Invalid(format!("buffer holds {len} values, need {}", phat.len())));
        }
        for r in 0..phat.nrows() {
            for c in 0..phat.ncols() {
                buf[r * phat.ncols() + c] = phat[(r, c)];
            }
        }
        Ok(())
    })
}

/// Writes the posterior archive tables into directory `dir`.
///
/// # Safety
/// `fit` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dlcr_fit_write_archive(fit: *const DlcrFit, dir: *const c_char) -> DlcrStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        let dir = PathBuf::from(string(dir, "dir")?);
        write_archive(&dir, &f.samples)?;
        Ok(())
    })
}

/// Area under the ROC curve of `scores` against 0/1 `labels`. Returns
/// `Undefined` when only one class is present.
///
/// # Safety
/// Both arrays must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dlcr_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> DlcrStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let s = slice(scores, len, "scores")?;
        let l = slice(labels, len, "labels")?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Failure::Invalid("scores must be finite".into()));
        }
        if l.iter().any(|&v| v > 1) {
            return Err(Failure::Invalid("labels must be 0 or 1".into()));
        }
        let labels: Vec<bool> = l.iter().map(|&v| v == 1).collect();
        *out = auc_scores(s, &labels).ok_or_else(|| Failure::Undefined("AUC needs both classes".into()))?;
        Ok(())
    })
}
