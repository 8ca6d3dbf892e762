use std::ffi::CStr;
use std::ptr;

use l3_splitting_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(l3_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn constant_a_through_the_abi() {
    let (mut a, mut b, mut err) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(l3_constant_a(1e-12, L3ConstantAMethod::XIntegral, &mut a, &mut err), L3Status::Ok);
        assert_eq!(l3_constant_a(1e-12, L3ConstantAMethod::LambdaIntegral, &mut b, ptr::null_mut()), L3Status::Ok);
        assert_eq!(l3_constant_a(1e-12, L3ConstantAMethod::XIntegral, ptr::null_mut(), ptr::null_mut()), L3Status::NullPointer);
    }
    assert!((a - b).abs() <= 1e-10);
    assert!((a - 0.1778).abs() < 1e-4);
    assert!((0.0..1e-10).contains(&err));
}

#[test]
fn lagrange_handle_lifecycle() {
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(l3_lagrange_new(1e-3, &mut h), L3Status::Ok);
        let mut p = L3LagrangePoint::default();
        assert_eq!(l3_lagrange_point(h, 2, &mut p), L3Status::Ok);
        assert!(p.q1 > 1.0 && p.q2.abs() < 1e-14);
        assert!(p.gradient_norm <= 1e-11);
        assert!(p.eigenvalues_re.iter().any(|&r| r > 0.0));
        assert_eq!(l3_lagrange_point(h, 5, &mut p), L3Status::InvalidArgument);
        assert!(last_error().contains("index"));
        l3_lagrange_free(h);

        let mut bad = ptr::null_mut();
        assert_eq!(l3_lagrange_new(0.6, &mut bad), L3Status::InvalidArgument);
        assert!(bad.is_null());
        assert!(!last_error().is_empty());
        l3_lagrange_free(ptr::null_mut());
    }
}

#[test]
fn splitting_with_config() {
    unsafe {
        let cfg = l3_splitting_config_new();
        assert_eq!(l3_splitting_config_set_tolerance(cfg, 1e-12), L3Status::Ok);
        assert_eq!(l3_splitting_config_set_tolerance(cfg, -1.0), L3Status::InvalidArgument);
        assert_eq!(l3_splitting_config_set_seed_offset(cfg, 1e-7), L3Status::Ok);
        assert_eq!(l3_splitting_config_set_precision(cfg, L3Precision::Auto), L3Status::Ok);
        let mut h = ptr::null_mut();
        assert_eq!(l3_splitting_compute(1e-3, std::f64::consts::FRAC_PI_2, cfg, &mut h), L3Status::Ok);
        let mut s = L3SplittingSummary::default();
        assert_eq!(l3_splitting_summary(h, &mut s), L3Status::Ok);
        assert!(s.d > 0.0 && s.energy_gap.abs() <= 1e-10);
        assert_eq!(s.precision, L3Precision::Native);
        let json = l3_splitting_to_json(h);
        assert!(!json.is_null());
        let doc: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(doc["d"].as_f64().unwrap(), s.d);
        l3_string_free(json);
        l3_splitting_free(h);

        assert_eq!(l3_splitting_config_set_precision(cfg, L3Precision::Native), L3Status::Ok);
        let mut h = ptr::null_mut();
        assert_eq!(l3_splitting_compute(1e-4, 1.0, cfg, &mut h), L3Status::NumericalFloor);
        assert!(h.is_null());
        l3_splitting_config_free(cfg);
    }
}

#[test]
fn stokes_through_the_abi() {
    let rhos = [12.0];
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(l3_stokes_compute(rhos.as_ptr(), 1, 0.0, 0, 0.0, &mut h), L3Status::Ok);
        let (mut re, mut im, mut spread) = (0.0, 0.0, 1.0);
        assert_eq!(l3_stokes_theta(h, &mut re, &mut im, &mut spread), L3Status::Ok);
        assert!((re.hypot(im) - 1.6207).abs() < 2e-3);
        assert_eq!(spread, 0.0);
        l3_stokes_free(h);
        let low = [1.0];
        assert_eq!(l3_stokes_compute(low.as_ptr(), 1, 0.0, 0, 0.0, &mut h), L3Status::InvalidArgument);
        assert_eq!(l3_stokes_compute(ptr::null(), 2, 0.0, 0, 0.0, &mut h), L3Status::NullPointer);
    }
}

#[test]
fn header_declares_the_api() {
    let header = include_str!("../include/l3_splitting.h");
    for name in [
        "l3_constant_a",
        "l3_lagrange_new",
        "l3_lagrange_free",
        "l3_splitting_compute",
        "l3_splitting_summary",
        "l3_stokes_compute",
        "l3_last_error",
        "L3_STATUS_NUMERICAL_FLOOR",
        "typedef struct L3Splitting L3Splitting",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
