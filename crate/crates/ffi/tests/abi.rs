use kanlab_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kanlab_last_error_message()) }.to_string_lossy().into_owned()
}

fn builtin() -> *mut KanlabSystem {
    let name = CString::new("kan1994").unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { kanlab_system_new_builtin(name.as_ptr(), &mut sys) }, KanlabStatus::Ok);
    assert!(!sys.is_null());
    sys
}

#[test]
fn step_matches_the_formula() {
    let sys = builtin();
    let (mut th, mut t) = (0.0, 0.0);
    assert_eq!(unsafe { kanlab_system_step(sys, 0.2, 0.4, &mut th, &mut t) }, KanlabStatus::Ok);
    let c = (std::f64::consts::TAU * 0.2).cos();
    assert_eq!(t, 0.4 + c * (0.4 / 32.0) * (1.0 - 0.4));
    assert!((th - 0.6).abs() < 1e-15);
    assert_eq!(
        unsafe { kanlab_system_step(sys, 0.2, 1.5, &mut th, &mut t) },
        KanlabStatus::InvalidArgument
    );
    assert!(last_error().contains("outside"));
    unsafe { kanlab_system_free(sys) };
}

#[test]
fn exponent_and_classification() {
    let sys = builtin();
    let mut l = 0.0;
    assert_eq!(unsafe { kanlab_boundary_exponent(sys, 0, 1 << 14, &mut l) }, KanlabStatus::Ok);
    assert!((l - ((1.0 + (1.0f64 - 1.0 / 1024.0).sqrt()) / 2.0).ln()).abs() < 1e-12);
    assert_eq!(unsafe { kanlab_boundary_exponent(sys, 3, 16, &mut l) }, KanlabStatus::InvalidArgument);

    let mut label = KanlabLabel::Undecided;
    let mut time = 7;
    assert_eq!(
        unsafe { kanlab_classify(sys, 0.3, 0.0, 10, 1e-6, 5, &mut label, &mut time) },
        KanlabStatus::Ok
    );
    assert_eq!((label, time), (KanlabLabel::Basin0, 0));
    assert_eq!(
        unsafe { kanlab_classify(sys, 0.3, 0.5, 10, 1e-6, 5, &mut label, &mut time) },
        KanlabStatus::Ok
    );
    assert_eq!((label, time), (KanlabLabel::Undecided, -1));
    unsafe { kanlab_system_free(sys) };
}

#[test]
fn json_systems_and_errors() {
    let good = CString::new(r#"{"base": {"degree": 3}, "epsilon": 0.3}"#).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { kanlab_system_from_json(good.as_ptr(), &mut sys) }, KanlabStatus::Ok);
    let mut s = 0.0;
    assert_eq!(unsafe { kanlab_sigma(sys, 0.25 + 1.0 / 1024.0, 20_000, 1e-4, &mut s) }, KanlabStatus::Ok);
    assert!(s > 0.0 && s < 1.0);
    unsafe { kanlab_system_free(sys) };

    let bad = CString::new(r#"{"base": {"degree": 3}}"#).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { kanlab_system_from_json(bad.as_ptr(), &mut sys) }, KanlabStatus::Config);
    assert!(sys.is_null());
    assert!(last_error().contains("epsilon"));

    let flat = CString::new(r#"{"base": {"degree": 3}, "epsilon": 0.0}"#).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { kanlab_system_from_json(flat.as_ptr(), &mut sys) }, KanlabStatus::Ok);
    assert_eq!(unsafe { kanlab_sigma(sys, 0.3, 1000, 1e-4, &mut s) }, KanlabStatus::Undecided);
    unsafe { kanlab_system_free(sys) };

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { kanlab_system_new_builtin(ptr::null(), &mut out) },
        KanlabStatus::NullPointer
    );
    let mut x = 0.0;
    assert_eq!(
        unsafe { kanlab_boundary_exponent(ptr::null(), 0, 16, &mut x) },
        KanlabStatus::NullPointer
    );
}

#[test]
fn equilibrium_handle() {
    let sys = builtin();
    let mut eq = ptr::null_mut();
    assert_eq!(
        unsafe { kanlab_equilibrium_solve(sys, ptr::null(), 0, ptr::null(), 0, 1 << 10, &mut eq) },
        KanlabStatus::Ok
    );
    let mut p = 0.0;
    assert_eq!(unsafe { kanlab_equilibrium_pressure(eq, &mut p) }, KanlabStatus::Ok);
    assert!((p - 3f64.ln()).abs() < 1e-9);
    let g = unsafe { kanlab_equilibrium_grid(eq) };
    assert_eq!(g, 1 << 10);
    let mut w = vec![0.0; g];
    assert_eq!(unsafe { kanlab_equilibrium_weights(eq, w.as_mut_ptr(), g) }, KanlabStatus::Ok);
    assert!(w.iter().all(|&x| (x - 1.0 / g as f64).abs() < 1e-12));
    assert_eq!(
        unsafe { kanlab_equilibrium_weights(eq, w.as_mut_ptr(), 3) },
        KanlabStatus::InvalidArgument
    );
    unsafe {
        kanlab_equilibrium_free(eq);
        kanlab_system_free(sys);
        kanlab_system_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/kanlab.h")).unwrap();
    for sym in [
        "typedef struct KanlabSystem KanlabSystem",
        "typedef struct KanlabEquilibrium KanlabEquilibrium",
        "KANLAB_STATUS_OK = 0",
        "kanlab_system_new_builtin",
        "kanlab_classify",
        "kanlab_last_error_message",
        "kanlab_equilibrium_free",
    ] {
        assert!(h.contains(sym), "missing {sym}");
    }
    let v = unsafe { CStr::from_ptr(kanlab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
