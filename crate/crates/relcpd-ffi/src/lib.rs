//! C ABI for the `relcpd` library.
//!
//! Calling conventions:
//!
//! * Every fallible entry point returns a [`RelcpdStatus`]; `Ok` is zero and
//!   out-parameters are written only on success.
//! * [`RelcpdMatrix`], [`RelcpdConfig`] and [`RelcpdResult`] are opaque
//!   handles. Each must be released exactly once with its matching `*_free`
//!   function; passing NULL to a `*_free` is a no-op.
//! * After a failure, the calling thread can read a human-readable message
//!   through [`relcpd_last_error_message`]; the pointer stays valid until
//!   that thread's next call into this library.
//! * Panics never unwind across the boundary: they are caught and reported
//!   as [`RelcpdStatus::Panic`].
//!
//! The generated header lives at `include/relcpd.h` and is refreshed by the
//! build script.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use relcpd::cpoint::estimate_cp;
use relcpd::relevance::{test_dense, test_sparse, TestConfig, TestResult};
use relcpd::selfnorm::NuMeasure;
use relcpd::trim::{select_m, DEFAULT_CUTOFF};
use relcpd::tsdata::{load_csv, PreprocessPolicy, TimeSeriesMatrix};
use relcpd::{Error, Result};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelcpdStatus {
    /// Success.
    Ok = 0,
    /// A parameter or configuration value is invalid.
    InvalidArgument = 1,
    /// The input data could not be read or is malformed.
    Data = 2,
    /// The statistic is degenerate on this input (for example, the data are
    /// too short to leave any admissible pair of observations).
    Degenerate = 3,
    /// A required pointer argument was NULL.
    NullPointer = 4,
    /// A panic was caught at the boundary; this indicates a bug in the
    /// library, not in the caller.
    Panic = 5,
}

/// Norm selector for [`relcpd_test`]: every coordinate, normalized by p.
pub const RELCPD_NORM_DENSE: i32 = 0;
/// Norm selector for [`relcpd_test`]: estimated support, normalized by |Ŝ|.
pub const RELCPD_NORM_SPARSE: i32 = 1;

/// Opaque handle for an n × p observation matrix (rows are time points).
pub struct RelcpdMatrix(TimeSeriesMatrix);

/// Opaque handle for a test configuration.
pub struct RelcpdConfig(TestConfig);

/// Opaque handle for a completed test run.
pub struct RelcpdResult(TestResult);

/// Flat snapshot of a test run. All quantities live on the squared-norm
/// scale (the scale of the threshold Δ); take square roots externally for
/// the norm scale.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RelcpdSummary {
    /// Test statistic T.
    pub statistic: f64,
    /// Self-normalizer V.
    pub normalizer: f64,
    /// (1 − α)-quantile of the pivotal limit distribution.
    pub quantile: f64,
    /// (1 − α/2)-quantile, used by the two-sided interval.
    pub quantile_half: f64,
    /// Configured threshold Δ.
    pub delta: f64,
    /// Nominal level α.
    pub alpha: f64,
    /// Smallest threshold at which the test would still reject.
    pub delta_alpha: f64,
    /// Upper end of the one-sided confidence interval [0, ci_upper].
    pub ci_upper: f64,
    /// Two-sided confidence interval [ci_two_low, ci_two_high].
    pub ci_two_low: f64,
    pub ci_two_high: f64,
    /// Estimated change location as a fraction of n.
    pub theta_hat: f64,
    /// Estimated split index (1-based).
    pub k_hat: usize,
    /// Trimming lag that was used.
    pub m_hat: usize,
    /// Number of coordinates entering the norm: p (dense) or |Ŝ| (sparse).
    pub norm_size: usize,
    /// True when H₀: ‖δ‖² ≤ Δ was rejected at level α.
    pub reject: bool,
    /// True when the estimated split fell in the guard region and the
    /// statistic is zero by definition (the null is then retained).
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn record_error(status: RelcpdStatus, message: String) -> RelcpdStatus {
    let text = CString::new(message)
        .unwrap_or_else(|_| CString::from(c"error message contained an interior NUL"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
    status
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(error: &Error) -> RelcpdStatus {
    match error {
        Error::InvalidArgument(_) | Error::TableMismatch(_) | Error::MissingAtom { .. } => {
            RelcpdStatus::InvalidArgument
        }
        Error::Degenerate(_) => RelcpdStatus::Degenerate,
        _ => RelcpdStatus::Data,
    }
}

fn record(error: Error) -> RelcpdStatus {
    record_error(status_of(&error), error.to_string())
}

/// Runs `f`, converting a panic into a recorded [`RelcpdStatus::Panic`].
fn guarded(f: impl FnOnce() -> RelcpdStatus) -> RelcpdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic of unknown type".to_string());
            record_error(RelcpdStatus::Panic, format!("internal panic: {message}"))
        }
    }
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            return record_error(
                RelcpdStatus::NullPointer,
                concat!($name, " must not be NULL").to_string(),
            );
        }
    };
}

fn emit<T>(out: *mut *mut T, value: T) -> RelcpdStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    RelcpdStatus::Ok
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Builds a matrix from a row-major buffer of `n · p` values
/// (row j, column l at `values[j*p + l]`). The buffer is copied.
///
/// # Safety
/// `values` must point to at least `n · p` readable doubles and `out` must
/// be a valid location for one pointer.
#[no_mangle]
pub unsafe extern "C" fn relcpd_matrix_new(
    n: usize,
    p: usize,
    values: *const f64,
    out: *mut *mut RelcpdMatrix,
) -> RelcpdStatus {
    guarded(|| {
        require!(out, "out");
        require!(values, "values");
        clear_last_error();
        let Some(len) = n.checked_mul(p) else {
            return record_error(
                RelcpdStatus::InvalidArgument,
                format!("matrix shape {n} × {p} overflows"),
            );
        };
        let data = unsafe { std::slice::from_raw_parts(values, len) }.to_vec();
        match TimeSeriesMatrix::from_flat(n, p, data) {
            Ok(m) => emit(out, RelcpdMatrix(m)),
            Err(e) => record(e),
        }
    })
}

/// Loads a matrix from a CSV file with one row per time point. Empty cells
/// are linearly interpolated per column when `interpolate` is set and are
/// an error otherwise.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid location for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn relcpd_matrix_from_csv(
    path: *const c_char,
    has_header: bool,
    interpolate: bool,
    out: *mut *mut RelcpdMatrix,
) -> RelcpdStatus {
    guarded(|| {
        require!(out, "out");
        require!(path, "path");
        clear_last_error();
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return record_error(
                RelcpdStatus::InvalidArgument,
                "path is not valid UTF-8".to_string(),
            );
        };
        let policy = PreprocessPolicy {
            interpolate_missing: interpolate,
            zero_negatives: false,
        };
        match load_csv(Path::new(path), has_header).and_then(|raw| raw.preprocess(policy)) {
            Ok(m) => emit(out, RelcpdMatrix(m)),
            Err(e) => record(e),
        }
    })
}

/// Number of rows (time points); 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_matrix_rows(m: *const RelcpdMatrix) -> usize {
    if m.is_null() {
        0
    } else {
        unsafe { &*m }.0.n()
    }
}

/// Number of columns (coordinates); 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_matrix_cols(m: *const RelcpdMatrix) -> usize {
    if m.is_null() {
        0
    } else {
        unsafe { &*m }.0.p()
    }
}

/// Releases a matrix handle; NULL is a no-op.
///
/// # Safety
/// `m` must be NULL or a live matrix handle, and must not be used again.
#[no_mangle]
pub unsafe extern "C" fn relcpd_matrix_free(m: *mut RelcpdMatrix) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Creates a configuration for testing H₀: ‖δ‖² ≤ `delta` (squared-norm
/// scale, `delta` ≥ 0). Defaults: α = 0.05, K = 20 atoms, data-driven
/// trimming lag, κ = 1.5, 10⁵ quantile replications, seed 0.
///
/// # Safety
/// `out` must be a valid location for one pointer.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_new(
    delta: f64,
    out: *mut *mut RelcpdConfig,
) -> RelcpdStatus {
    guarded(|| {
        require!(out, "out");
        clear_last_error();
        if delta.is_nan() || delta < 0.0 {
            return record_error(
                RelcpdStatus::InvalidArgument,
                format!("threshold Δ must be ≥ 0, got {delta}"),
            );
        }
        emit(out, RelcpdConfig(TestConfig::new(delta)))
    })
}

/// Releases a configuration handle; NULL is a no-op.
///
/// # Safety
/// `c` must be NULL or a live configuration handle, and must not be used
/// again.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_free(c: *mut RelcpdConfig) {
    if !c.is_null() {
        drop(unsafe { Box::from_raw(c) });
    }
}

unsafe fn configure(
    c: *mut RelcpdConfig,
    apply: impl FnOnce(&mut TestConfig) -> Result<()>,
) -> RelcpdStatus {
    guarded(|| {
        require!(c, "config");
        clear_last_error();
        match apply(&mut unsafe { &mut *c }.0) {
            Ok(()) => RelcpdStatus::Ok,
            Err(e) => record(e),
        }
    })
}

/// Sets the nominal level α ∈ (0, 1).
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_alpha(c: *mut RelcpdConfig, alpha: f64) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "level α must lie in (0, 1), got {alpha}"
                )));
            }
            cfg.alpha = alpha;
            Ok(())
        })
    }
}

/// Sets the atom count K ≥ 2 of the self-normalizing measure ν.
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_k(c: *mut RelcpdConfig, k: usize) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            NuMeasure::new(k)?;
            cfg.k = k;
            Ok(())
        })
    }
}

/// Fixes the trimming lag instead of selecting it from the data.
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_m(c: *mut RelcpdConfig, m: usize) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            cfg.m = Some(m);
            Ok(())
        })
    }
}

/// Restores the default data-driven choice of the trimming lag.
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_auto_m(c: *mut RelcpdConfig) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            cfg.m = None;
            Ok(())
        })
    }
}

/// Sets the support-threshold exponent κ > 1 (sparse test only).
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_kappa(c: *mut RelcpdConfig, kappa: f64) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            if !(kappa > 1.0 && kappa.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "exponent κ must be a finite number > 1, got {kappa}"
                )));
            }
            cfg.kappa = kappa;
            Ok(())
        })
    }
}

/// Sets the |ΔF| cutoff (> 0) used by the trimming-lag selector.
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_trim_cutoff(
    c: *mut RelcpdConfig,
    cutoff: f64,
) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            if !(cutoff > 0.0 && cutoff.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "trim cutoff must be a finite number > 0, got {cutoff}"
                )));
            }
            cfg.trim_cutoff = cutoff;
            Ok(())
        })
    }
}

/// Sets the Monte Carlo replication count (> 0) for the limit quantiles.
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_quantile_reps(
    c: *mut RelcpdConfig,
    reps: usize,
) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            if reps == 0 {
                return Err(Error::InvalidArgument(
                    "quantile replications must be > 0".to_string(),
                ));
            }
            if let relcpd::relevance::QuantileSource::Mc { reps: slot, .. } = &mut cfg.quantiles {
                *slot = reps;
            }
            Ok(())
        })
    }
}

/// Sets the seed of the quantile simulation (any value is valid).
///
/// # Safety
/// `c` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_config_set_seed(c: *mut RelcpdConfig, seed: u64) -> RelcpdStatus {
    unsafe {
        configure(c, |cfg| {
            if let relcpd::relevance::QuantileSource::Mc { seed: slot, .. } = &mut cfg.quantiles {
                *slot = seed;
            }
            Ok(())
        })
    }
}

// ---------------------------------------------------------------------------
// Running tests
// ---------------------------------------------------------------------------

/// Runs the relevant-change test on `x` and hands back a result handle.
/// `norm` is [`RELCPD_NORM_DENSE`] or [`RELCPD_NORM_SPARSE`].
///
/// A degenerate split is not an error: the call succeeds and the summary
/// carries `degenerate = true` with the null retained.
///
/// # Safety
/// `x` and `config` must be live handles and `out` a valid location for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn relcpd_test(
    x: *const RelcpdMatrix,
    config: *const RelcpdConfig,
    norm: i32,
    out: *mut *mut RelcpdResult,
) -> RelcpdStatus {
    guarded(|| {
        require!(out, "out");
        require!(x, "x");
        require!(config, "config");
        clear_last_error();
        let data = &unsafe { &*x }.0;
        let cfg = &unsafe { &*config }.0;
        let run = match norm {
            RELCPD_NORM_DENSE => test_dense(data, cfg),
            RELCPD_NORM_SPARSE => test_sparse(data, cfg),
            other => {
                return record_error(
                    RelcpdStatus::InvalidArgument,
                    format!(
                        "norm selector must be {RELCPD_NORM_DENSE} (dense) or \
                         {RELCPD_NORM_SPARSE} (sparse), got {other}"
                    ),
                )
            }
        };
        match run {
            Ok(result) => emit(out, RelcpdResult(result)),
            Err(e) => record(e),
        }
    })
}

/// Copies the flat summary of a result.
///
/// # Safety
/// `r` must be a live result handle and `out` a valid location for one
/// [`RelcpdSummary`].
#[no_mangle]
pub unsafe extern "C" fn relcpd_result_summary(
    r: *const RelcpdResult,
    out: *mut RelcpdSummary,
) -> RelcpdStatus {
    guarded(|| {
        require!(r, "result");
        require!(out, "out");
        clear_last_error();
        let res = &unsafe { &*r }.0;
        let summary = RelcpdSummary {
            statistic: res.t,
            normalizer: res.v,
            quantile: res.q,
            quantile_half: res.q_half,
            delta: res.delta,
            alpha: res.alpha,
            delta_alpha: res.delta_alpha,
            ci_upper: res.ci_upper.1,
            ci_two_low: res.ci_two_sided.0,
            ci_two_high: res.ci_two_sided.1,
            theta_hat: res.theta_hat,
            k_hat: res.k_hat,
            m_hat: res.m_hat,
            norm_size: res.norm_size,
            reject: res.reject,
            degenerate: res.degenerate,
        };
        unsafe { *out = summary };
        RelcpdStatus::Ok
    })
}

/// Number of coordinates in the estimated support Ŝ; 0 for a dense-test
/// result or a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn relcpd_result_support_len(r: *const RelcpdResult) -> usize {
    if r.is_null() {
        return 0;
    }
    unsafe { &*r }.0.s_hat.as_ref().map_or(0, Vec::len)
}

/// Copies the estimated support (0-based coordinate indices, ascending)
/// into `buf`. `capacity` must be at least [`relcpd_result_support_len`].
///
/// # Safety
/// `r` must be a live result handle and `buf` must point to `capacity`
/// writable `size_t` slots.
#[no_mangle]
pub unsafe extern "C" fn relcpd_result_support(
    r: *const RelcpdResult,
    buf: *mut usize,
    capacity: usize,
) -> RelcpdStatus {
    guarded(|| {
        require!(r, "result");
        clear_last_error();
        let support = unsafe { &*r }.0.s_hat.as_deref().unwrap_or(&[]);
        if capacity < support.len() {
            return record_error(
                RelcpdStatus::InvalidArgument,
                format!(
                    "support buffer holds {capacity} entries but {} are needed",
                    support.len()
                ),
            );
        }
        if !support.is_empty() {
            require!(buf, "buf");
            unsafe { std::ptr::copy_nonoverlapping(support.as_ptr(), buf, support.len()) };
        }
        RelcpdStatus::Ok
    })
}

/// Releases a result handle; NULL is a no-op.
///
/// # Safety
/// `r` must be NULL or a live result handle, and must not be used again.
#[no_mangle]
pub unsafe extern "C" fn relcpd_result_free(r: *mut RelcpdResult) {
    if !r.is_null() {
        drop(unsafe { Box::from_raw(r) });
    }
}

// ---------------------------------------------------------------------------
// Standalone estimators
// ---------------------------------------------------------------------------

/// Estimates the change location: the 1-based split index k̂ and its
/// fraction θ̂ = k̂/n.
///
/// # Safety
/// `x` must be a live matrix handle; `k_hat` and `theta_hat` must be valid
/// locations.
#[no_mangle]
pub unsafe extern "C" fn relcpd_estimate_cp(
    x: *const RelcpdMatrix,
    k_hat: *mut usize,
    theta_hat: *mut f64,
) -> RelcpdStatus {
    guarded(|| {
        require!(x, "x");
        require!(k_hat, "k_hat");
        require!(theta_hat, "theta_hat");
        clear_last_error();
        match estimate_cp(&unsafe { &*x }.0) {
            Ok(fit) => {
                unsafe {
                    *k_hat = fit.k_hat;
                    *theta_hat = fit.theta_hat;
                }
                RelcpdStatus::Ok
            }
            Err(e) => record(e),
        }
    })
}

/// Selects the trimming lag m̂ from the data, splitting at the estimated
/// change location. Pass `cutoff` ≤ 0 for the default (0.01).
///
/// # Safety
/// `x` must be a live matrix handle and `m_hat` a valid location.
#[no_mangle]
pub unsafe extern "C" fn relcpd_select_m(
    x: *const RelcpdMatrix,
    cutoff: f64,
    m_hat: *mut usize,
) -> RelcpdStatus {
    guarded(|| {
        require!(x, "x");
        require!(m_hat, "m_hat");
        clear_last_error();
        let cutoff = if cutoff > 0.0 { cutoff } else { DEFAULT_CUTOFF };
        let data = &unsafe { &*x }.0;
        let selected = estimate_cp(data).and_then(|fit| select_m(data, fit.k_hat, cutoff));
        match selected {
            Ok(sel) => {
                unsafe { *m_hat = sel.m_hat };
                RelcpdStatus::Ok
            }
            Err(e) => record(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Message for the calling thread's most recent failure, or an empty string
/// after a success. The pointer stays valid until this thread's next call
/// into the library.
#[no_mangle]
pub extern "C" fn relcpd_last_error_message() -> *const c_char {
    const EMPTY: &CStr = c"";
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(EMPTY.as_ptr(), |msg| msg.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn relcpd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
