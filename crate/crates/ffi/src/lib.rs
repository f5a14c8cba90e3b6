//! C ABI over the placement solver, the online learners and the KWIK learner.
//!
//! Every entry point returns an [`EcStatus`]; results go through out-pointers.
//! Handles are opaque and must be released with their `_free` function.
//! Panics never cross the boundary: they surface as `EC_STATUS_PANIC`.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use edgecache::asp::{asp, compute_constants, optimal_placement, AspConstants, DEFAULT_QUAD_TOL};
use edgecache::domain::{NetworkParams, PopularityProfile};
use edgecache::error::Error;
use edgecache::kwik::{kwik_step, KwikConfig, KwikState};
use edgecache::ol_predictors::{ol_step, OlModel, OlState, Observation};
use edgecache::op_predictors::{ppm_predict, HistoryWindow, OpConfig, OpModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalFailure = 4,
    Panic = 5,
}

impl From<&Error> for EcStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => EcStatus::InvalidArgument,
            3 => EcStatus::DataError,
            _ => EcStatus::NumericalFailure,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcOlModel {
    Ppm = 0,
    Gpm = 1,
    Rpm = 2,
    Ipm = 3,
}

impl From<EcOlModel> for OlModel {
    fn from(m: EcOlModel) -> Self {
        match m {
            EcOlModel::Ppm => OlModel::Ppm,
            EcOlModel::Gpm => OlModel::Gpm,
            EcOlModel::Rpm => OlModel::Rpm,
            EcOlModel::Ipm => OlModel::Ipm,
        }
    }
}

/// Network parameters; `cache_size` is the number of files a station stores.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcNetworkParams {
    pub bs_density: f64,
    pub path_loss: f64,
    pub bandwidth: f64,
    pub rate_threshold: f64,
    pub tx_power: f64,
    pub noise: f64,
    pub cache_size: usize,
}

impl From<NetworkParams> for EcNetworkParams {
    fn from(p: NetworkParams) -> Self {
        Self {
            bs_density: p.bs_density,
            path_loss: p.path_loss,
            bandwidth: p.bandwidth,
            rate_threshold: p.rate_threshold,
            tx_power: p.tx_power,
            noise: p.noise,
            cache_size: p.cache_size,
        }
    }
}

impl From<EcNetworkParams> for NetworkParams {
    fn from(p: EcNetworkParams) -> Self {
        Self {
            bs_density: p.bs_density,
            path_loss: p.path_loss,
            bandwidth: p.bandwidth,
            rate_threshold: p.rate_threshold,
            tx_power: p.tx_power,
            noise: p.noise,
            cache_size: p.cache_size,
        }
    }
}

/// Network constants bound to a cache size.
pub struct EcPlacement {
    constants: AspConstants,
    cache_size: usize,
}

/// Online learner state.
pub struct EcOlLearner {
    state: OlState,
}

/// KWIK learner state.
pub struct EcKwikLearner {
    state: KwikState,
}

fn guard(f: impl FnOnce() -> Result<(), EcStatus>) -> EcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EcStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => EcStatus::Panic,
    }
}

fn lift<T>(r: edgecache::error::Result<T>) -> Result<T, EcStatus> {
    r.map_err(|e| EcStatus::from(&e))
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], EcStatus> {
    if ptr.is_null() {
        return Err(EcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize) -> Result<&'a mut [T], EcStatus> {
    if ptr.is_null() {
        return Err(EcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or a live handle created by this library.
unsafe fn handle<'a, T>(ptr: *mut T) -> Result<&'a mut T, EcStatus> {
    ptr.as_mut().ok_or(EcStatus::NullPointer)
}

fn profile(values: &[f64]) -> Result<PopularityProfile, EcStatus> {
    lift(PopularityProfile::new(values.to_vec()))
}

/// Static, NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn ec_status_message(status: EcStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        EcStatus::Ok => b"ok\0",
        EcStatus::NullPointer => b"null pointer argument\0",
        EcStatus::InvalidArgument => b"invalid argument\0",
        EcStatus::DataError => b"invalid input data\0",
        EcStatus::NumericalFailure => b"numerical failure\0",
        EcStatus::Panic => b"internal panic\0",
    };
    text.as_ptr().cast()
}

/// Default network: density 200, path loss 3.5, 24 kHz, rate threshold 1,
/// unit power, no noise, cache size 2.
#[no_mangle]
pub extern "C" fn ec_network_params_default() -> EcNetworkParams {
    NetworkParams::default().into()
}

/// # Safety
/// `params` must point to a valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_placement_new(
    params: *const EcNetworkParams,
    n_files: usize,
    out: *mut *mut EcPlacement,
) -> EcStatus {
    guard(|| {
        let params: NetworkParams = (*params.as_ref().ok_or(EcStatus::NullPointer)?).into();
        let out = out.as_mut().ok_or(EcStatus::NullPointer)?;
        lift(params.validate(n_files))?;
        let constants = lift(compute_constants(&params, DEFAULT_QUAD_TOL))?;
        *out = Box::into_raw(Box::new(EcPlacement { constants, cache_size: params.cache_size }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `ec_placement_new`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ec_placement_free(handle: *mut EcPlacement) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Optimal caching probabilities for profile `p` of length `n`, written to
/// `q_out`; the resulting success probability goes to `asp_out` if non-null.
///
/// # Safety
/// `p` and `q_out` must hold `n` values; `asp_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ec_placement_solve(
    model: *mut EcPlacement,
    p: *const f64,
    n: usize,
    q_out: *mut f64,
    asp_out: *mut f64,
) -> EcStatus {
    guard(|| {
        let model = handle(model)?;
        let p = profile(slice(p, n)?)?;
        let q_out = slice_mut(q_out, n)?;
        let policy = lift(optimal_placement(&p, model.cache_size, &model.constants))?;
        q_out.copy_from_slice(&policy.q);
        if let Some(a) = asp_out.as_mut() {
            *a = lift(asp(&p, &policy.q, &model.constants))?;
        }
        Ok(())
    })
}

/// Success probability of caching probabilities `q` under profile `p`.
///
/// # Safety
/// `p` and `q` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_placement_asp(
    model: *mut EcPlacement,
    p: *const f64,
    q: *const f64,
    n: usize,
    out: *mut f64,
) -> EcStatus {
    guard(|| {
        let model = handle(model)?;
        let p = profile(slice(p, n)?)?;
        let q = slice(q, n)?;
        let out = out.as_mut().ok_or(EcStatus::NullPointer)?;
        *out = lift(asp(&p, q, &model.constants))?;
        Ok(())
    })
}

/// Sliding-window profile prediction. `window` holds `tau` profiles of
/// length `n`, oldest first, row-major.
///
/// # Safety
/// `window` must hold `tau * n` values and `out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ec_ppm_predict(
    window: *const f64,
    tau: usize,
    n: usize,
    order: usize,
    out: *mut f64,
) -> EcStatus {
    guard(|| {
        if n == 0 || tau == 0 {
            return Err(EcStatus::InvalidArgument);
        }
        let total = tau.checked_mul(n).ok_or(EcStatus::InvalidArgument)?;
        let rows = slice(window, total)?;
        let out = slice_mut(out, n)?;
        let profiles = rows.chunks(n).map(profile).collect::<Result<Vec<_>, _>>()?;
        let cfg = lift(OpConfig::new(OpModel::Ppm, order, tau))?;
        let w = lift(HistoryWindow::new(profiles, tau - 1))?;
        out.copy_from_slice(lift(ppm_predict(&w, &cfg))?.as_slice());
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_ol_new(model: EcOlModel, n_files: usize, out: *mut *mut EcOlLearner) -> EcStatus {
    guard(|| {
        let out = out.as_mut().ok_or(EcStatus::NullPointer)?;
        let state = lift(OlState::new(model.into(), n_files))?;
        *out = Box::into_raw(Box::new(EcOlLearner { state }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `ec_ol_new`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ec_ol_free(handle: *mut EcOlLearner) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Feeds one slot and writes the next-slot profile. `counts` (length `n`) is
/// required by the count learner and ignored otherwise; `n_max` scales it.
///
/// # Safety
/// `p` and `prediction_out` must hold `n` values; `counts` may be null
/// unless the learner is the count model.
#[no_mangle]
pub unsafe extern "C" fn ec_ol_step(
    learner: *mut EcOlLearner,
    p: *const f64,
    counts: *const u64,
    n: usize,
    n_max: u64,
    prediction_out: *mut f64,
) -> EcStatus {
    guard(|| {
        let learner = handle(learner)?;
        let p = profile(slice(p, n)?)?;
        let counts = if counts.is_null() { None } else { Some(slice(counts, n)?) };
        let out = slice_mut(prediction_out, n)?;
        let next = lift(ol_step(&mut learner.state, Observation { profile: &p, counts, n_max }))?;
        out.copy_from_slice(next.as_slice());
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec_kwik_new(
    n_files: usize,
    order: usize,
    alpha_q: f64,
    alpha_v: f64,
    out: *mut *mut EcKwikLearner,
) -> EcStatus {
    guard(|| {
        let out = out.as_mut().ok_or(EcStatus::NullPointer)?;
        let cfg = KwikConfig { alpha_q, alpha_v, ..lift(KwikConfig::new(order))? };
        let state = lift(KwikState::new(n_files, cfg))?;
        *out = Box::into_raw(Box::new(EcKwikLearner { state }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `ec_kwik_new`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ec_kwik_free(handle: *mut EcKwikLearner) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Feeds one observation per file and writes next-slot values. Files that
/// abstain get `known_out[i] = 0` and an unspecified value.
///
/// # Safety
/// `obs`, `values_out` and `known_out` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ec_kwik_step(
    learner: *mut EcKwikLearner,
    obs: *const f64,
    n: usize,
    values_out: *mut f64,
    known_out: *mut u8,
) -> EcStatus {
    guard(|| {
        let learner = handle(learner)?;
        let obs = slice(obs, n)?;
        let values = slice_mut(values_out, n)?;
        let known = slice_mut(known_out, n)?;
        let out = lift(kwik_step(&mut learner.state, obs))?;
        for ((v, k), o) in values.iter_mut().zip(known.iter_mut()).zip(&out.values) {
            *v = o.unwrap_or(f64::NAN);
            *k = u8::from(o.is_some());
        }
        Ok(())
    })
}
