//! C ABI for the mlsync estimators.
//!
//! Handles are opaque: create them with the `*_new` / `mlsync_estimate`
//! functions and release them with the matching `*_free`. Every fallible call
//! returns an [`MlsyncStatus`]; on failure a description is available from
//! [`mlsync_last_error`] on the same thread until the next failing call.
//! Complex vectors cross the boundary as interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mlsync::estimator::{estimate, EstimationResult, EstimatorOptions, GridSpec, Method};
use mlsync::model::{
    generate_channel, mean_signal_power, received_signal, select_samples, MeasurementSelection,
    NoiseSpec, PilotBlock, SampledModel, SystemConfig,
};
use mlsync::{CVector, Error};
use num_complex::Complex64;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlsyncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutOfRange = 4,
    Numerical = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlsyncMethod {
    /// Grid search with subspace-pursuit channel fits.
    Mlsp = 0,
    /// Grid search with least-squares channel fits.
    Mlls = 1,
}

/// Link dimensions; mirrors the Rust `SystemConfig`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MlsyncSystem {
    pub subcarriers: usize,
    pub tx: usize,
    pub rx: usize,
    pub taps: usize,
    pub sparsity: usize,
    pub theta_max: usize,
    pub cp_len: usize,
}

/// Search grid; the timing range must lie in `0..=theta_max`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MlsyncGrid {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_step: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_step: f64,
    pub theta_min: i64,
    pub theta_max: i64,
    pub theta_step: i64,
}

/// Opaque estimator: dimensions, grid, pilots and method.
pub struct MlsyncEstimator {
    system: SystemConfig,
    grid: GridSpec,
    pilots: PilotBlock,
    method: Method,
}

/// Opaque estimation result.
pub struct MlsyncResult {
    inner: EstimationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MlsyncStatus {
    match e {
        Error::DimensionMismatch { .. } => MlsyncStatus::DimensionMismatch,
        Error::OutOfRange { .. } => MlsyncStatus::OutOfRange,
        Error::ZeroColumn(_) | Error::SingularFisher { .. } => MlsyncStatus::Numerical,
        _ => MlsyncStatus::InvalidArgument,
    }
}

struct Failure(MlsyncStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MlsyncStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MlsyncStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MlsyncStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            MlsyncStatus::Internal
        }
    }
}

impl From<MlsyncSystem> for SystemConfig {
    fn from(s: MlsyncSystem) -> Self {
        SystemConfig {
            subcarriers: s.subcarriers,
            tx: s.tx,
            rx: s.rx,
            taps: s.taps,
            sparsity: s.sparsity,
            theta_max: s.theta_max,
            cp_len: s.cp_len,
        }
    }
}

impl From<MlsyncGrid> for GridSpec {
    fn from(g: MlsyncGrid) -> Self {
        GridSpec {
            eps_min: g.eps_min,
            eps_max: g.eps_max,
            eps_step: g.eps_step,
            eta_min: g.eta_min,
            eta_max: g.eta_max,
            eta_step: g.eta_step,
            theta_min: g.theta_min,
            theta_max: g.theta_max,
            theta_step: g.theta_step,
        }
    }
}

fn complex_in(data: *const f64, len: usize) -> Result<CVector, Failure> {
    if data.is_null() {
        return Err(null("sample buffer"));
    }
    // SAFETY: the caller provides `2 * len` readable doubles.
    let raw = unsafe { std::slice::from_raw_parts(data, 2 * len) };
    Ok(CVector::from_iterator(
        len,
        raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])),
    ))
}

fn complex_out(v: &CVector, out: *mut f64, capacity: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if capacity < v.len() {
        return Err(Failure(
            MlsyncStatus::DimensionMismatch,
            format!("output holds {capacity} complex values, {} needed", v.len()),
        ));
    }
    // SAFETY: the caller provides `2 * capacity` writable doubles.
    let raw = unsafe { std::slice::from_raw_parts_mut(out, 2 * v.len()) };
    for (c, z) in raw.chunks_exact_mut(2).zip(v.iter()) {
        c[0] = z.re;
        c[1] = z.im;
    }
    Ok(())
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mlsync_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mlsync_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reference link: 2x2, 128 subcarriers, 26 taps, 5-sparse, CP 32, θ_max 5.
#[no_mangle]
pub extern "C" fn mlsync_system_default() -> MlsyncSystem {
    let s = SystemConfig::reference();
    MlsyncSystem {
        subcarriers: s.subcarriers,
        tx: s.tx,
        rx: s.rx,
        taps: s.taps,
        sparsity: s.sparsity,
        theta_max: s.theta_max,
        cp_len: s.cp_len,
    }
}

/// Reference-resolution grid centred on `(epsilon, eta)` with the given half
/// widths and timing range `0..=theta_max`.
#[no_mangle]
pub extern "C" fn mlsync_grid_around(
    epsilon: f64,
    eta: f64,
    eps_half: f64,
    eta_half: f64,
    theta_max: usize,
) -> MlsyncGrid {
    let g = GridSpec::around(epsilon, eta, eps_half, eta_half, theta_max);
    MlsyncGrid {
        eps_min: g.eps_min,
        eps_max: g.eps_max,
        eps_step: g.eps_step,
        eta_min: g.eta_min,
        eta_max: g.eta_max,
        eta_step: g.eta_step,
        theta_min: g.theta_min,
        theta_max: g.theta_max,
        theta_step: g.theta_step,
    }
}

/// Creates an estimator with QPSK pilots drawn from `pilot_seed`.
///
/// # Safety
/// `system` and `grid` must point to valid structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlsync_estimator_new(
    system: *const MlsyncSystem,
    grid: *const MlsyncGrid,
    method: MlsyncMethod,
    pilot_seed: u64,
    out: *mut *mut MlsyncEstimator,
) -> MlsyncStatus {
    guard(|| {
        if system.is_null() || grid.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: checked non-null above; the caller guarantees validity.
        let (system, grid) = unsafe { (SystemConfig::from(*system), GridSpec::from(*grid)) };
        system.validate()?;
        grid.validate()?;
        if grid.theta_min < 0 || grid.theta_max > system.theta_max as i64 {
            return Err(Failure(
                MlsyncStatus::OutOfRange,
                format!("timing grid must lie in 0..={}", system.theta_max),
            ));
        }
        let handle = Box::new(MlsyncEstimator {
            pilots: PilotBlock::qpsk(&system, pilot_seed),
            system,
            grid,
            method: match method {
                MlsyncMethod::Mlsp => Method::Mlsp,
                MlsyncMethod::Mlls => Method::Mlls,
            },
        });
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `est` must come from [`mlsync_estimator_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mlsync_estimator_free(est: *mut MlsyncEstimator) {
    if !est.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(est) });
    }
}

/// Length of the channel vector `L_m · tx · rx` for this estimator, or 0 for null.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mlsync_channel_len(est: *const MlsyncEstimator) -> usize {
    // SAFETY: null or live per the contract.
    unsafe { est.as_ref() }.map_or(0, |e| e.system.channel_len())
}

/// Simulates one observation with the estimator's pilots.
///
/// Draws a sparse channel (`seed`), `m` samples per receive antenna and
/// noise at `snr_db` (ignored when `noiseless` is nonzero). Writes
/// `m · rx` complex samples and sample indices, and the true channel.
///
/// # Safety
/// `samples` needs `2·m·rx` doubles, `indices` `m·rx` entries and `channel`
/// `2·channel_len` doubles (may be null to skip).
#[no_mangle]
pub unsafe extern "C" fn mlsync_simulate(
    est: *const MlsyncEstimator,
    epsilon: f64,
    eta: f64,
    theta: i64,
    snr_db: f64,
    noiseless: i32,
    m: usize,
    seed: u64,
    samples: *mut f64,
    indices: *mut usize,
    channel: *mut f64,
) -> MlsyncStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let est = unsafe { est.as_ref() }.ok_or_else(|| null("estimator"))?;
        if indices.is_null() {
            return Err(null("index buffer"));
        }
        let cfg = &est.system;
        let h = generate_channel(cfg, seed)?;
        let sel = select_samples(cfg, m, seed.wrapping_add(1))?;
        let noise = if noiseless != 0 {
            NoiseSpec::noiseless()
        } else {
            if !snr_db.is_finite() {
                return Err(Failure(
                    MlsyncStatus::InvalidArgument,
                    "SNR must be finite".into(),
                ));
            }
            let full = MeasurementSelection::full(cfg);
            let a1 =
                SampledModel::new(cfg, &est.pilots, eta, Some(theta), &full)?.with_cfo(epsilon);
            NoiseSpec::from_snr(snr_db, mean_signal_power(cfg, &a1))
        };
        let a1u = SampledModel::new(cfg, &est.pilots, eta, Some(theta), &sel)?.with_cfo(epsilon);
        let r = received_signal(&a1u, &h.taps, &noise, seed.wrapping_add(2))?;
        complex_out(&r, samples, r.len())?;
        // SAFETY: the caller provides `m · rx` writable entries.
        unsafe { std::slice::from_raw_parts_mut(indices, sel.len()) }
            .copy_from_slice(sel.indices());
        if !channel.is_null() {
            complex_out(&h.taps, channel, h.taps.len())?;
        }
        Ok(())
    })
}

/// Runs the two-stage grid search on `count` samples taken at `indices`
/// (ascending, `per_rx` per receive antenna).
///
/// # Safety
/// `samples` holds `2·count` doubles, `indices` `count` entries; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mlsync_estimate(
    est: *const MlsyncEstimator,
    samples: *const f64,
    indices: *const usize,
    count: usize,
    per_rx: usize,
    out: *mut *mut MlsyncResult,
) -> MlsyncStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let est = unsafe { est.as_ref() }.ok_or_else(|| null("estimator"))?;
        if indices.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let r = complex_in(samples, count)?;
        // SAFETY: `count` readable entries per the contract.
        let idx = unsafe { std::slice::from_raw_parts(indices, count) }.to_vec();
        let sel = MeasurementSelection::from_indices(&est.system, idx, per_rx)?;
        let inner = estimate(
            est.method,
            &r,
            &sel,
            &est.grid,
            &est.system,
            &est.pilots,
            &EstimatorOptions::default(),
        )?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(MlsyncResult { inner })) };
        Ok(())
    })
}

/// # Safety
/// `res` must come from [`mlsync_estimate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mlsync_result_free(res: *mut MlsyncResult) {
    if !res.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(res) });
    }
}

/// Scalar estimates and minimum costs.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MlsyncEstimates {
    pub epsilon: f64,
    pub eta: f64,
    pub theta: i64,
    pub cost_j1: f64,
    pub cost_j2: f64,
    pub j1_evals: usize,
    pub j2_evals: usize,
}

/// # Safety
/// `res` must be a live result and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mlsync_result_estimates(
    res: *const MlsyncResult,
    out: *mut MlsyncEstimates,
) -> MlsyncStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let r = &unsafe { res.as_ref() }.ok_or_else(|| null("result"))?.inner;
        if out.is_null() {
            return Err(null("output"));
        }
        let e = MlsyncEstimates {
            epsilon: r.epsilon_hat,
            eta: r.eta_hat,
            theta: r.theta_hat,
            cost_j1: r.min_cost_j1,
            cost_j2: r.min_cost_j2,
            j1_evals: r.j1_evals,
            j2_evals: r.j2_evals,
        };
        // SAFETY: non-null and writable.
        unsafe { *out = e };
        Ok(())
    })
}

/// Copies the channel estimate into `out` (`2·capacity` doubles).
///
/// # Safety
/// `res` must be a live result; `out` must hold `2·capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn mlsync_result_channel(
    res: *const MlsyncResult,
    out: *mut f64,
    capacity: usize,
) -> MlsyncStatus {
    guard(|| {
        // SAFETY: null or live per the contract.
        let r = &unsafe { res.as_ref() }.ok_or_else(|| null("result"))?.inner;
        complex_out(&r.h_hat, out, capacity)
    })
}
