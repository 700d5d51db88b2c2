use std::ffi::{CStr, CString};
use std::ptr;

use geomag_nav::field::{derive_elements, peaks_anomaly};
use geomag_nav_ffi::*;

const ANOMALY_FREE: &str = r#"{"mission": {"origin": [22.6, 132.9], "destinations": [[20.8, 136.0]]}}"#;

fn world(json: &str) -> *mut GnWorld {
    let j = CString::new(json).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { gn_world_from_config_json(j.as_ptr(), ptr::null(), &mut w) }, GnStatus::Ok);
    assert!(!w.is_null());
    w
}

fn last_error() -> String {
    let p = gn_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn analytic_mission_round_trip() {
    let w = world(ANOMALY_FREE);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gn_run_mission(w, ptr::null(), &mut r) }, GnStatus::Ok);
    let mut outcome = GnOutcome::Aborted;
    assert_eq!(unsafe { gn_result_outcome(r, &mut outcome) }, GnStatus::Ok);
    assert_eq!(outcome, GnOutcome::Success);
    let steps = unsafe { gn_result_steps(r) };
    assert!(steps > 0 && steps <= 300);

    let mut m = GnMetrics {
        travelled_km: 0.0,
        steps: 0,
        heading_variance: 0.0,
        heading_variance_unbiased: 0.0,
        deviation: 0.0,
        mean_eta: 0.0,
    };
    assert_eq!(unsafe { gn_result_metrics(r, &mut m) }, GnStatus::Ok);
    assert_eq!(m.steps, steps);
    assert!(m.travelled_km > 0.0);
    assert!(m.mean_eta.is_nan());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gn_result_write_csv(r, cpath.as_ptr()) }, GnStatus::Ok);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), steps + 2);

    unsafe {
        gn_result_free(r);
        gn_world_free(w);
    }
}

#[test]
fn field_queries_match_library() {
    let w = world("{}");
    let mut s = GnFieldSample {
        bx_nt: 0.0,
        by_nt: 0.0,
        bz_nt: 0.0,
        f_nt: 0.0,
        h_nt: 0.0,
        incl_deg: 0.0,
        decl_deg: 0.0,
    };
    assert_eq!(unsafe { gn_field_at(w, 22.6, 132.9, &mut s) }, GnStatus::Ok);
    assert!((s.f_nt - (s.bx_nt.powi(2) + s.by_nt.powi(2) + s.bz_nt.powi(2)).sqrt()).abs() < 1e-6);
    unsafe { gn_world_free(w) };

    assert_eq!(unsafe { gn_derive_elements(3.0, 4.0, 12.0, &mut s) }, GnStatus::Ok);
    let m = derive_elements(3.0, 4.0, 12.0).unwrap();
    assert_eq!((s.f_nt, s.h_nt), (13.0, 5.0));
    assert_eq!(s.decl_deg, m.decl_deg.unwrap());

    assert_eq!(unsafe { gn_derive_elements(0.0, 0.0, 5.0, &mut s) }, GnStatus::Ok);
    assert!(s.decl_deg.is_nan());
    assert_eq!(s.incl_deg, 90.0);

    assert_eq!(gn_peaks_anomaly(0.3, -1.2), peaks_anomaly(0.3, -1.2));
}

#[test]
fn errors_map_to_status_codes() {
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { gn_world_from_config_json(ptr::null(), ptr::null(), &mut w) }, GnStatus::NullPointer);

    let bad = CString::new(r#"{"mission": {"eps": -1}}"#).unwrap();
    assert_eq!(unsafe { gn_world_from_config_json(bad.as_ptr(), ptr::null(), &mut w) }, GnStatus::Config);
    assert!(w.is_null());
    assert!(last_error().contains("eps"));

    let not_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { gn_world_from_config_json(not_utf8.as_ptr().cast(), ptr::null(), &mut w) },
        GnStatus::InvalidUtf8
    );

    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.talstm").unwrap();
    assert_eq!(unsafe { gn_model_load(missing.as_ptr(), 0, &mut m) }, GnStatus::Io);

    let cal = world(r#"{"policy": {"kind": "calibrated"}}"#);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gn_run_mission(cal, ptr::null(), &mut r) }, GnStatus::Policy);
    assert!(r.is_null());
    assert!(last_error().contains("requires a trained model"));

    let grid = world("{}");
    let mut s = std::mem::MaybeUninit::<GnFieldSample>::uninit();
    assert_eq!(unsafe { gn_field_at(grid, 95.0, 0.0, s.as_mut_ptr()) }, GnStatus::Config);

    assert_eq!(unsafe { gn_result_steps(ptr::null()) }, 0);
    unsafe {
        gn_world_free(cal);
        gn_world_free(grid);
        gn_world_free(ptr::null_mut());
        gn_model_free(ptr::null_mut());
        gn_result_free(ptr::null_mut());
    }
}

#[test]
fn grid_world_reports_out_of_domain() {
    let dir = tempfile::tempdir().unwrap();
    let g = geomag_nav::field::FieldGrid::new(20.0, 130.0, 1.0, 1.0, 2, 2, &[[29000.0, 2500.0, 12000.0]; 4]).unwrap();
    std::fs::write(dir.path().join("g.txt"), g.to_text()).unwrap();
    let json = CString::new(r#"{"world": {"grid": "g.txt"}, "mission": {"origin": [20.5, 130.5], "destinations": [[20.6, 130.6]]}}"#).unwrap();
    let base = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { gn_world_from_config_json(json.as_ptr(), base.as_ptr(), &mut w) }, GnStatus::Ok);
    let mut s = std::mem::MaybeUninit::<GnFieldSample>::uninit();
    assert_eq!(unsafe { gn_field_at(w, 20.5, 130.5, s.as_mut_ptr()) }, GnStatus::Ok);
    assert_eq!(unsafe { gn_field_at(w, 25.0, 130.5, s.as_mut_ptr()) }, GnStatus::OutOfDomain);
    unsafe { gn_world_free(w) };
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(gn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/geomag_nav.h")).unwrap();
    for f in [
        "gn_world_from_config_json",
        "gn_world_free",
        "gn_field_at",
        "gn_derive_elements",
        "gn_peaks_anomaly",
        "gn_model_load",
        "gn_model_free",
        "gn_run_mission",
        "gn_result_steps",
        "gn_result_outcome",
        "gn_result_metrics",
        "gn_result_write_csv",
        "gn_result_free",
        "gn_last_error_message",
        "gn_version",
        "GN_STATUS_INTERNAL = 99",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}
