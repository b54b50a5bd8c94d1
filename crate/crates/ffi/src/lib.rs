//! C ABI over the level-set estimation library.
//!
//! Conventions: handles are opaque pointers created by `*_new`/`*_run`
//! functions and released by the matching `*_free`; every fallible call
//! returns an [`MlseStatus`] and leaves a message retrievable through
//! [`mlse_last_error_message`]; strings returned by the library are
//! allocated and must be released with [`mlse_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use mlse::eval::{discrepancy, info_accounting};
use mlse::gp::{GroundTruth, PosteriorState};
use mlse::harness::{run_experiment, run_one, ExperimentConfig, Variant};
use mlse::kernel::KernelSpec;
use mlse::lse::Classification;
use mlse::lse_fast::run_fast;
use mlse::partition::PartitionTree;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlseStatus {
    MlseOk = 0,
    MlseNullPointer = 1,
    MlseInvalidUtf8 = 2,
    MlseInvalidArgument = 3,
    MlseNumericFailure = 4,
    MlseIoFailure = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &mlse::Error) -> MlseStatus {
    match err {
        mlse::Error::Config { .. } | mlse::Error::Json(_) | mlse::Error::InvalidKernel(_) => {
            MlseStatus::MlseInvalidArgument
        }
        mlse::Error::Io(_) => MlseStatus::MlseIoFailure,
        _ => MlseStatus::MlseNumericFailure,
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mlse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mlse_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must have been returned by an `mlse_*` function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn mlse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn parse_json<'a, T: serde::Deserialize<'a>>(
    json: *const c_char,
) -> Result<T, MlseStatus> {
    if json.is_null() {
        set_error("null json pointer");
        return Err(MlseStatus::MlseNullPointer);
    }
    let text = CStr::from_ptr(json).to_str().map_err(|e| {
        set_error(&format!("invalid utf-8: {e}"));
        MlseStatus::MlseInvalidUtf8
    })?;
    serde_json::from_str::<T>(text).map_err(|e| {
        set_error(&format!("json: {e}"));
        MlseStatus::MlseInvalidArgument
    })
}

/// Opaque incremental GP posterior.
pub struct MlsePosterior {
    state: PosteriorState,
    dim: usize,
}

/// Creates a posterior for a kernel described in JSON, e.g.
/// `{"family":"squared_exponential","scale":1.0,"length":1.0}`.
///
/// # Safety
/// `kernel_json` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mlse_posterior_new(
    kernel_json: *const c_char,
    dim: usize,
    noise_var: f64,
    out: *mut *mut MlsePosterior,
) -> MlseStatus {
    if out.is_null() {
        set_error("null out pointer");
        return MlseStatus::MlseNullPointer;
    }
    let kernel: KernelSpec = match parse_json(kernel_json) {
        Ok(k) => k,
        Err(s) => return s,
    };
    if let Err(e) = kernel.validate() {
        set_error(&e.to_string());
        return MlseStatus::MlseInvalidArgument;
    }
    if dim == 0 || !(noise_var > 0.0 && noise_var.is_finite()) {
        set_error("dim must be >= 1 and noise_var positive");
        return MlseStatus::MlseInvalidArgument;
    }
    let handle = Box::new(MlsePosterior {
        state: PosteriorState::new(kernel, noise_var),
        dim,
    });
    *out = Box::into_raw(handle);
    MlseStatus::MlseOk
}

/// Appends one observation `y` at point `x` (length `dim`).
///
/// # Safety
/// `p` must be a live posterior handle; `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mlse_posterior_update(
    p: *mut MlsePosterior,
    x: *const f64,
    dim: usize,
    y: f64,
) -> MlseStatus {
    let Some(p) = p.as_mut() else {
        set_error("null posterior handle");
        return MlseStatus::MlseNullPointer;
    };
    if x.is_null() {
        set_error("null point");
        return MlseStatus::MlseNullPointer;
    }
    if dim != p.dim {
        set_error(&format!("dimension mismatch: handle {}, point {}", p.dim, dim));
        return MlseStatus::MlseInvalidArgument;
    }
    let point = std::slice::from_raw_parts(x, dim);
    match p.state.update(point, y) {
        Ok(()) => MlseStatus::MlseOk,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Posterior mean and standard deviation at `x`.
///
/// # Safety
/// `p` must be a live handle; `x` points to `dim` doubles; `mean` and
/// `stddev` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mlse_posterior_predict(
    p: *const MlsePosterior,
    x: *const f64,
    dim: usize,
    mean: *mut f64,
    stddev: *mut f64,
) -> MlseStatus {
    let Some(p) = p.as_ref() else {
        set_error("null posterior handle");
        return MlseStatus::MlseNullPointer;
    };
    if x.is_null() || mean.is_null() || stddev.is_null() {
        set_error("null output pointer");
        return MlseStatus::MlseNullPointer;
    }
    if dim != p.dim {
        set_error(&format!("dimension mismatch: handle {}, point {}", p.dim, dim));
        return MlseStatus::MlseInvalidArgument;
    }
    let point = std::slice::from_raw_parts(x, dim);
    match p.state.posterior(point) {
        Ok((m, s)) => {
            *mean = m;
            *stddev = s;
            MlseStatus::MlseOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Releases a posterior handle.
///
/// # Safety
/// `p` must be a handle from [`mlse_posterior_new`], not freed before.
#[no_mangle]
pub unsafe extern "C" fn mlse_posterior_free(p: *mut MlsePosterior) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Opaque finished run: classification, trace and evaluation metrics.
pub struct MlseRun {
    classification: Classification,
    l_value: f64,
    sym_diff_fraction: f64,
    j_n: f64,
    mutual_info: f64,
}

/// Runs one `(budget, seed)` cell of an experiment config (JSON, same
/// schema as the CLI) and returns a run handle.
///
/// # Safety
/// `config_json` must be nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_levelset(
    config_json: *const c_char,
    budget: usize,
    seed: u64,
    out: *mut *mut MlseRun,
) -> MlseStatus {
    if out.is_null() {
        set_error("null out pointer");
        return MlseStatus::MlseNullPointer;
    }
    let config: ExperimentConfig = match parse_json(config_json) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if let Err(e) = config.validate() {
        set_error(&e.to_string());
        return MlseStatus::MlseInvalidArgument;
    }
    let run = (|| -> mlse::Result<MlseRun> {
        let params = config.algo_params(budget)?;
        let mut truth = GroundTruth::new(
            config.kernel.clone(),
            config.dimension,
            config.noise_var,
            config.effective_grid_resolution(),
            seed,
        )?;
        let mut tree = PartitionTree::new_unit(config.dimension);
        let classification = match config.variant {
            Variant::Core => mlse::lse::run(params, &mut tree, &mut truth)?,
            Variant::Fast => run_fast(params, &mut tree, &mut truth)?,
        };
        let disc = discrepancy(&classification, &truth, config.tau);
        let info = info_accounting(
            &classification.trace,
            config.dimension,
            &config.kernel,
            config.noise_var,
        )?;
        Ok(MlseRun {
            classification,
            l_value: disc.l_value,
            sym_diff_fraction: disc.sym_diff_fraction,
            j_n: info.j_n,
            mutual_info: info.mutual_info,
        })
    })();
    match run {
        Ok(r) => {
            *out = Box::into_raw(Box::new(r));
            MlseStatus::MlseOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Discrepancy of the run's classification against the true level set
/// (NaN when the config disabled the evaluation grid).
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_l_value(r: *const MlseRun) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.l_value)
}

/// Grid fraction of the symmetric difference.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_sym_diff_fraction(r: *const MlseRun) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.sym_diff_fraction)
}

/// Sum of posterior variances at the run's evaluation times.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_info_gain(r: *const MlseRun) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.j_n)
}

/// Mutual information between the noisy observations and the function.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_mutual_info(r: *const MlseRun) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.mutual_info)
}

/// Number of function evaluations performed.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_num_evals(r: *const MlseRun) -> u64 {
    r.as_ref().map_or(0, |r| r.classification.summary.n_evals as u64)
}

/// Number of cell refinements performed.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_num_refinements(r: *const MlseRun) -> u64 {
    r.as_ref().map_or(0, |r| r.classification.summary.n_refinements)
}

/// Deepest partition level reached.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_max_depth(r: *const MlseRun) -> u32 {
    r.as_ref().map_or(0, |r| r.classification.summary.max_depth)
}

/// Cells classified super-level.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_num_super_cells(r: *const MlseRun) -> u64 {
    r.as_ref().map_or(0, |r| r.classification.s_hat.len() as u64)
}

/// Cells classified sub-level.
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_num_sub_cells(r: *const MlseRun) -> u64 {
    r.as_ref().map_or(0, |r| r.classification.r_hat.len() as u64)
}

/// The run trace as tab-separated lines (step, action, depth, index, mu,
/// sigma, l_bar, u_bar, n_e). Free with [`mlse_string_free`].
///
/// # Safety
/// `r` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_trace_tsv(r: *const MlseRun) -> *mut c_char {
    let Some(r) = r.as_ref() else {
        return std::ptr::null_mut();
    };
    let mut text = String::new();
    for rec in &r.classification.trace {
        text.push_str(&rec.to_line());
        text.push('\n');
    }
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Releases a run handle.
///
/// # Safety
/// `r` must be a handle from [`mlse_run_levelset`], not freed before.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_free(r: *mut MlseRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs a whole configured sweep, writing results.csv, depth_counts.csv
/// and config_used.json under the config's output directory.
///
/// # Safety
/// `config_json` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_experiment_json(
    config_json: *const c_char,
    threads: usize,
    seed_offset: u64,
) -> MlseStatus {
    let config: ExperimentConfig = match parse_json(config_json) {
        Ok(c) => c,
        Err(s) => return s,
    };
    match run_experiment(&config, threads, seed_offset) {
        Ok(_) => MlseStatus::MlseOk,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Convenience single-cell row as a JSON string (same fields as one CSV
/// row). Free with [`mlse_string_free`].
///
/// # Safety
/// `config_json` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mlse_run_one_json(
    config_json: *const c_char,
    budget: usize,
    seed: u64,
) -> *mut c_char {
    let config: ExperimentConfig = match parse_json(config_json) {
        Ok(c) => c,
        Err(_) => return std::ptr::null_mut(),
    };
    if let Err(e) = config.validate() {
        set_error(&e.to_string());
        return std::ptr::null_mut();
    }
    match run_one(&config, budget, seed) {
        Ok(row) => serde_json::to_string(&row)
            .ok()
            .and_then(|s| CString::new(s).ok())
            .map_or(std::ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}
