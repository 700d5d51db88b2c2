//! C ABI over `geomag_nav`.
//!
//! Handles are opaque heap objects released with their `*_free` function.
//! Every fallible call returns a [`GnStatus`]; on failure the message is
//! available from [`gn_last_error_message`] on the same thread until the
//! next failing call. Panics are caught at the boundary and reported as
//! [`GnStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use geomag_nav::config::ScenarioConfig;
use geomag_nav::experiment::write_trajectory_csv;
use geomag_nav::field::{derive_elements, field_at, peaks_anomaly, LocalProjection, MagneticVector, World};
use geomag_nav::nav::mission::{run_mission, HeadingPolicy, MissionOutcome, MissionResult};
use geomag_nav::talstm::{load_model, TaLstmModel};
use geomag_nav::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    OutOfDomain = 5,
    Model = 6,
    Policy = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnOutcome {
    Success = 0,
    BudgetExhausted = 1,
    Aborted = 2,
}

/// Field elements in nT and degrees. Undefined angles are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnFieldSample {
    pub bx_nt: f64,
    pub by_nt: f64,
    pub bz_nt: f64,
    pub f_nt: f64,
    pub h_nt: f64,
    pub incl_deg: f64,
    pub decl_deg: f64,
}

/// Mission metrics. `mean_eta` is NaN without calibration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnMetrics {
    pub travelled_km: f64,
    pub steps: usize,
    pub heading_variance: f64,
    pub heading_variance_unbiased: f64,
    pub deviation: f64,
    pub mean_eta: f64,
}

/// Scenario and the world built from it.
pub struct GnWorld {
    config: ScenarioConfig,
    world: World,
}

pub struct GnModel {
    model: TaLstmModel,
}

pub struct GnMissionResult {
    result: MissionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> GnStatus {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => GnStatus::Config,
        Error::Io { .. } => GnStatus::Io,
        Error::OutOfDomain(_) => GnStatus::OutOfDomain,
        Error::Model(_) => GnStatus::Model,
        Error::Policy(_) | Error::NotReady(_) => GnStatus::Policy,
        Error::Degenerate(_) | Error::Training(_) => GnStatus::Internal,
    }
}

fn fail(e: Error) -> GnStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

/// Run `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> GnStatus) -> GnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GnStatus::Internal
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("null pointer: ", stringify!($p)));
            return GnStatus::NullPointer;
        })+
    };
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, GnStatus> {
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        GnStatus::InvalidUtf8
    })
}

fn sample(m: &MagneticVector) -> GnFieldSample {
    GnFieldSample {
        bx_nt: m.bx_nt,
        by_nt: m.by_nt,
        bz_nt: m.bz_nt,
        f_nt: m.f_nt,
        h_nt: m.h_nt,
        incl_deg: m.incl_deg.unwrap_or(f64::NAN),
        decl_deg: m.decl_deg.unwrap_or(f64::NAN),
    }
}

/// Build a world from scenario JSON. `base_dir` anchors relative paths in
/// the scenario and may be null for the current directory.
///
/// # Safety
/// `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn gn_world_from_config_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut GnWorld,
) -> GnStatus {
    guard(|| {
        non_null!(json, out);
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let dir = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            match read_str(base_dir) {
                Ok(s) => PathBuf::from(s),
                Err(s) => return s,
            }
        };
        let built = ScenarioConfig::from_json(text, &dir).and_then(|c| {
            c.validate()?;
            let world = c.build_world()?;
            Ok(GnWorld { config: c, world })
        });
        match built {
            Ok(w) => {
                *out = Box::into_raw(Box::new(w));
                GnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `world` must come from [`gn_world_from_config_json`] and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gn_world_free(world: *mut GnWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Field elements at a geographic position.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gn_field_at(world: *const GnWorld, lat_deg: f64, lon_deg: f64, out: *mut GnFieldSample) -> GnStatus {
    guard(|| {
        non_null!(world, out);
        let w = &*world;
        // Only the geographic coordinates matter here; the frame origin is
        // kept off the poles so the projection exists.
        let r = LocalProjection::new(lat_deg.clamp(-88.0, 88.0), lon_deg)
            .and_then(|f| f.position(lat_deg, lon_deg))
            .and_then(|p| field_at(&p, &w.world));
        match r {
            Ok(m) => {
                *out = sample(&m);
                GnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Derived elements of a component triple.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gn_derive_elements(bx_nt: f64, by_nt: f64, bz_nt: f64, out: *mut GnFieldSample) -> GnStatus {
    guard(|| {
        non_null!(out);
        match derive_elements(bx_nt, by_nt, bz_nt) {
            Ok(m) => {
                *out = sample(&m);
                GnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The unscaled multimodal anomaly surface.
#[no_mangle]
pub extern "C" fn gn_peaks_anomaly(u: f64, v: f64) -> f64 {
    peaks_anomaly(u, v)
}

/// Load a model file. `window` of 0 accepts any window length.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gn_model_load(path: *const c_char, window: usize, out: *mut *mut GnModel) -> GnStatus {
    guard(|| {
        non_null!(path, out);
        *out = ptr::null_mut();
        let p = match read_str(path) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match load_model(Path::new(p), (window > 0).then_some(window)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(GnModel { model }));
                GnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must come from [`gn_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gn_model_free(model: *mut GnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fly the world's scenario mission with its configured policy. `model`
/// may be null for the analytic policy.
///
/// Budget exhaustion is a result, not an error: check
/// [`gn_result_outcome`].
///
/// # Safety
/// `world` and a non-null `model` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gn_run_mission(
    world: *const GnWorld,
    model: *const GnModel,
    out: *mut *mut GnMissionResult,
) -> GnStatus {
    guard(|| {
        non_null!(world, out);
        *out = ptr::null_mut();
        let w = &*world;
        let m = model.as_ref().map(|m| &m.model);
        let r = HeadingPolicy::from_kind(w.config.policy.kind, m, w.config.calibration)
            .and_then(|p| run_mission(&w.world, &w.config.mission_spec(), &p));
        match r {
            Ok(result) => {
                *out = Box::into_raw(Box::new(GnMissionResult { result }));
                GnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Steps over all legs, 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gn_result_steps(result: *const GnMissionResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.steps())
}

/// # Safety
/// `result` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gn_result_outcome(result: *const GnMissionResult, out: *mut GnOutcome) -> GnStatus {
    guard(|| {
        non_null!(result, out);
        *out = match (*result).result.outcome {
            MissionOutcome::Success => GnOutcome::Success,
            MissionOutcome::BudgetExhausted => GnOutcome::BudgetExhausted,
            MissionOutcome::Aborted => GnOutcome::Aborted,
        };
        GnStatus::Ok
    })
}

/// # Safety
/// `result` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gn_result_metrics(result: *const GnMissionResult, out: *mut GnMetrics) -> GnStatus {
    guard(|| {
        non_null!(result, out);
        let m = &(*result).result.metrics;
        *out = GnMetrics {
            travelled_km: m.travelled_km,
            steps: m.steps,
            heading_variance: m.heading_variance_signed,
            heading_variance_unbiased: m.heading_variance_unbiased,
            deviation: m.deviation,
            mean_eta: m.mean_eta.unwrap_or(f64::NAN),
        };
        GnStatus::Ok
    })
}

/// Write the per-step trajectory CSV.
///
/// # Safety
/// `result` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gn_result_write_csv(result: *const GnMissionResult, path: *const c_char) -> GnStatus {
    guard(|| {
        non_null!(result, path);
        let p = match read_str(path) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match write_trajectory_csv(&(*result).result, Path::new(p)) {
            Ok(()) => GnStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `result` must come from [`gn_run_mission`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gn_result_free(result: *mut GnMissionResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn gn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
