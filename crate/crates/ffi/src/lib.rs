//! C ABI over the rantwin core.
//!
//! Every object is an opaque heap handle created by a `*_new` / `*_load`
//! function and released with the matching `*_free`. Every fallible
//! function returns a [`RantwinStatus`]; on failure a description is
//! available from [`rantwin_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use rantwin::anomaly::{extract_features, standardize, AnomalyClass, FaultSpec, FeatureStats, FeatureVector};
use rantwin::mlp::MlpModel;
use rantwin::sim::{MeasurementReport, SimConfig, SimState, UeId};
use rantwin::twin::{twin_tick, AllocationPlan, PredictedKpi};
use rantwin::Error;

pub const RANTWIN_N_FEATURES: usize = 8;
pub const RANTWIN_N_CLASSES: usize = 4;

/// Result of every fallible call. Values 2 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RantwinStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    Pipeline = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RantwinTickSummary {
    pub tick: u64,
    pub handovers: u32,
    pub faulted_ues: u32,
    pub mean_sinr_db: f64,
    pub total_demand_mbps: f64,
    pub total_achieved_mbps: f64,
    pub twin_elapsed_ms: f64,
}

/// A running simulation with the twin allocating every tick.
pub struct RantwinSim {
    state: SimState,
    last: Option<(Vec<MeasurementReport>, Vec<PredictedKpi>, AllocationPlan)>,
}

pub struct RantwinModel {
    model: MlpModel,
}

pub struct RantwinStats {
    stats: FeatureStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> RantwinStatus {
    match err.exit_code() {
        3 => RantwinStatus::Io,
        4 => RantwinStatus::Numeric,
        5 => RantwinStatus::Pipeline,
        _ => RantwinStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RantwinStatus>) -> RantwinStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RantwinStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            RantwinStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, RantwinStatus>;
}

impl<T> OrStatus<T> for rantwin::Result<T> {
    fn or_status(self) -> Result<T, RantwinStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> RantwinStatus {
    set_error(format!("{what} is null"));
    RantwinStatus::NullPointer
}

fn invalid(msg: impl Into<String>) -> RantwinStatus {
    set_error(msg);
    RantwinStatus::InvalidArgument
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, RantwinStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, RantwinStatus> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, RantwinStatus> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn features_arg<'a>(p: *const f64) -> Result<&'a [f64; RANTWIN_N_FEATURES], RantwinStatus> {
    unsafe { p.cast::<[f64; RANTWIN_N_FEATURES]>().as_ref() }.ok_or_else(|| null("features"))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), RantwinStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { p.write(value) };
    Ok(())
}

/// Message for the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn rantwin_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rantwin_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a simulation from a TOML configuration string, or with defaults
/// when `config_toml` is null.
///
/// # Safety
/// `config_toml` must be null or a valid NUL-terminated string; `out_sim`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_new(config_toml: *const c_char, out_sim: *mut *mut RantwinSim) -> RantwinStatus {
    guard(|| {
        let config = if config_toml.is_null() {
            SimConfig::default()
        } else {
            let text = unsafe { CStr::from_ptr(config_toml) }
                .to_str()
                .map_err(|_| invalid("configuration is not valid UTF-8"))?;
            SimConfig::from_toml_str(text).or_status()?
        };
        let state = SimState::new(config).or_status()?;
        let sim = Box::into_raw(Box::new(RantwinSim { state, last: None }));
        unsafe { out(out_sim, sim, "out_sim") }.inspect_err(|_| drop(unsafe { Box::from_raw(sim) }))
    })
}

/// # Safety
/// `sim` must be null or a handle from [`rantwin_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_free(sim: *mut RantwinSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Advance one tick: simulate, let the twin allocate PRBs and apply the
/// allocation.
///
/// # Safety
/// `sim` must be a live handle; `out_summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_step(sim: *mut RantwinSim, out_summary: *mut RantwinTickSummary) -> RantwinStatus {
    guard(|| {
        let sim = unsafe { handle_mut(sim, "sim") }?;
        let (reports, kpis) = sim.state.step().or_status()?;
        let s = &sim.state;
        let twin = twin_tick(&reports, &s.cells, &s.active_boosts(s.tick), &s.config.link_params).or_status()?;
        sim.state.apply_allocation(&twin.plan);
        let summary = RantwinTickSummary {
            tick: kpis.tick,
            handovers: kpis.handovers,
            faulted_ues: kpis.faulted_ues,
            mean_sinr_db: kpis.mean_sinr_db,
            total_demand_mbps: kpis.total_demand_mbps,
            total_achieved_mbps: kpis.total_achieved_mbps,
            twin_elapsed_ms: twin.elapsed_ms,
        };
        sim.last = Some((reports, twin.kpis, twin.plan));
        if !out_summary.is_null() {
            unsafe { out_summary.write(summary) };
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle; `out_n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_n_ues(sim: *const RantwinSim, out_n: *mut u32) -> RantwinStatus {
    guard(|| {
        let sim = unsafe { handle(sim, "sim") }?;
        unsafe { out(out_n, sim.state.ues.len() as u32, "out_n") }
    })
}

/// Corrupt a UE's reports. `class` is 1 (RSRP), 2 (RSRQ) or 3 (SINR).
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_inject_fault(
    sim: *mut RantwinSim,
    ue_id: u32,
    class: u8,
    offset_db: f64,
    jitter_db: f64,
    duration_ticks: u32,
) -> RantwinStatus {
    guard(|| {
        let sim = unsafe { handle_mut(sim, "sim") }?;
        let class = AnomalyClass::from_code(class).or_status()?;
        let spec = FaultSpec { class, offset_db, jitter_db, duration_ticks };
        spec.validate().or_status()?;
        sim.state.set_fault(UeId(ue_id), spec).or_status()
    })
}

/// The 8 classifier features of a UE at the most recent tick.
///
/// # Safety
/// `sim` must be a live handle; `out_features` must point to 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn rantwin_sim_ue_features(
    sim: *const RantwinSim,
    ue_id: u32,
    out_features: *mut f64,
) -> RantwinStatus {
    guard(|| {
        let sim = unsafe { handle(sim, "sim") }?;
        let Some((reports, kpis, plan)) = &sim.last else {
            return Err(invalid("no tick has been simulated yet"));
        };
        let idx = reports
            .iter()
            .position(|r| r.ue_id == UeId(ue_id))
            .ok_or_else(|| invalid(format!("unknown UE {ue_id}")))?;
        let f = extract_features(&reports[idx], &kpis[idx], plan).or_status()?;
        unsafe { out(out_features.cast::<[f64; RANTWIN_N_FEATURES]>(), f.0, "out_features") }
    })
}

/// Load a model from its text format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rantwin_model_load(path: *const c_char, out_model: *mut *mut RantwinModel) -> RantwinStatus {
    guard(|| {
        let path = unsafe { path_arg(path) }?;
        let model = MlpModel::load(&path).or_status()?;
        if model.dims().first() != Some(&RANTWIN_N_FEATURES) || model.dims().last() != Some(&RANTWIN_N_CLASSES) {
            return Err(invalid(format!("model dimensions {:?} do not map 8 features to 4 classes", model.dims())));
        }
        let handle = Box::into_raw(Box::new(RantwinModel { model }));
        unsafe { out(out_model, handle, "out_model") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
    })
}

/// # Safety
/// `model` must be null or a handle from [`rantwin_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rantwin_model_free(model: *mut RantwinModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Classify one standardized feature vector. `out_probs` (4 doubles) may
/// be null; `out_class` receives the class code 0..3.
///
/// # Safety
/// `model` must be a live handle, `features` must point to 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn rantwin_model_predict(
    model: *const RantwinModel,
    features: *const f64,
    out_probs: *mut f64,
    out_class: *mut u8,
) -> RantwinStatus {
    guard(|| {
        let model = unsafe { handle(model, "model") }?;
        let x = unsafe { features_arg(features) }?;
        let fwd = model.model.forward(x).or_status()?;
        let class = rantwin::mlp::argmax(&fwd.probs) as u8;
        if !out_probs.is_null() {
            unsafe { out_probs.cast::<[f64; RANTWIN_N_CLASSES]>().write(fwd.probs) };
        }
        unsafe { out(out_class, class, "out_class") }
    })
}

/// Load standardization statistics (`feature,mean,std` CSV).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_stats` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rantwin_stats_load(path: *const c_char, out_stats: *mut *mut RantwinStats) -> RantwinStatus {
    guard(|| {
        let path = unsafe { path_arg(path) }?;
        let stats = FeatureStats::load(&path).or_status()?;
        let handle = Box::into_raw(Box::new(RantwinStats { stats }));
        unsafe { out(out_stats, handle, "out_stats") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
    })
}

/// # Safety
/// `stats` must be null or a handle from [`rantwin_stats_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rantwin_stats_free(stats: *mut RantwinStats) {
    if !stats.is_null() {
        drop(unsafe { Box::from_raw(stats) });
    }
}

/// `out[i] = (features[i] - mean[i]) / std[i]`. The buffers may alias.
///
/// # Safety
/// `stats` must be a live handle; both pointers must address 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn rantwin_stats_standardize(
    stats: *const RantwinStats,
    features: *const f64,
    out_features: *mut f64,
) -> RantwinStatus {
    guard(|| {
        let stats = unsafe { handle(stats, "stats") }?;
        let x = *unsafe { features_arg(features) }?;
        let z = standardize(&FeatureVector(x), &stats.stats);
        unsafe { out(out_features.cast::<[f64; RANTWIN_N_FEATURES]>(), z.0, "out_features") }
    })
}
