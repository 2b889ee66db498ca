use std::f64::consts::PI;
use std::ffi::{CStr, CString};
use std::ptr;

use geoflow_ffi::*;

fn metric(json: &str) -> *mut GeoflowMetric {
    let s = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { geoflow_metric_from_json(s.as_ptr(), &mut m) };
    assert_eq!(st, GeoflowStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = unsafe { geoflow_last_error_message() };
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(geoflow_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_metric_reports_code_and_message() {
    let s = CString::new(r#"{"kind":"ellipsoid","params":{"a":[1.0,-1.0,1.0]}}"#).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { geoflow_metric_from_json(s.as_ptr(), &mut m) };
    assert_eq!(st, GeoflowStatus::InvalidMetric);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let s = CString::new(r#"{"kind":"custom","params":{"name":"nope"}}"#).unwrap();
    let st = unsafe { geoflow_metric_from_json(s.as_ptr(), &mut m) };
    assert_eq!(st, GeoflowStatus::UnknownCustomMetric);

    let st = unsafe { geoflow_metric_from_json(ptr::null(), &mut m) };
    assert_eq!(st, GeoflowStatus::NullPointer);
}

#[test]
fn success_clears_last_error() {
    let st = unsafe { geoflow_metric_from_json(ptr::null(), &mut ptr::null_mut()) };
    assert_eq!(st, GeoflowStatus::NullPointer);
    let m = metric(r#"{"kind":"sphere","params":{}}"#);
    assert!(unsafe { geoflow_last_error_message() }.is_null());
    unsafe { geoflow_metric_free(m) };
}

#[test]
fn sphere_area_curvature_and_great_circle() {
    let m = metric(r#"{"kind":"round-sphere","params":{"radius":1.0}}"#);
    let mut area = 0.0;
    assert_eq!(unsafe { geoflow_metric_area(m, &mut area) }, GeoflowStatus::Ok);
    assert!((area - 4.0 * PI).abs() < 1e-12);

    let p = GeoflowPoint {
        chart: 0,
        u: 0.2,
        v: -0.3,
    };
    let mut k = 0.0;
    assert_eq!(unsafe { geoflow_gauss_curvature(m, p, &mut k) }, GeoflowStatus::Ok);
    assert!((k - 1.0).abs() < 1e-9);

    let mut start = GeoflowPhasePoint {
        base: p,
        du: 0.0,
        dv: 0.0,
    };
    assert_eq!(unsafe { geoflow_unit_vector(m, p, 0.7, &mut start) }, GeoflowStatus::Ok);
    let mut end = start;
    let mut drift = 1.0;
    let st = unsafe { geoflow_geodesic_endpoint(m, start, 2.0 * PI, 1e-12, &mut end, &mut drift) };
    assert_eq!(st, GeoflowStatus::Ok);
    assert!(drift < 1e-9);
    // a great circle closes; compare in the starting chart
    let mut k_end = 0.0;
    assert_eq!(
        unsafe { geoflow_gauss_curvature(m, end.base, &mut k_end) },
        GeoflowStatus::Ok
    );
    if end.base.chart == p.chart {
        assert!((end.base.u - p.u).abs() < 1e-7 && (end.base.v - p.v).abs() < 1e-7);
    }
    unsafe { geoflow_metric_free(m) };
}

#[test]
fn torus_vertical_determinant() {
    let m = metric(r#"{"kind":"torus","params":{}}"#);
    let p = GeoflowPoint {
        chart: 0,
        u: 0.1,
        v: 0.4,
    };
    let mut theta = GeoflowPhasePoint {
        base: p,
        du: 0.0,
        dv: 0.0,
    };
    unsafe { geoflow_unit_vector(m, p, 1.1, &mut theta) };
    let mut d = 0.0;
    assert_eq!(
        unsafe { geoflow_vertical_determinant(m, theta, 3.0, &mut d) },
        GeoflowStatus::Ok
    );
    assert!((d - 10.0).abs() < 1e-8, "{d}");
    unsafe { geoflow_metric_free(m) };
}

#[test]
fn torus_self_count() {
    let m = metric(r#"{"kind":"torus","params":{}}"#);
    let x = GeoflowPoint {
        chart: 0,
        u: 0.0,
        v: 0.0,
    };
    let (mut count, mut n) = (0usize, 0usize);
    let mut lengths = [0.0; 64];
    let st = unsafe { geoflow_count_geodesics(m, x, x, 2.5, 0, &mut count, lengths.as_mut_ptr(), 64, &mut n) };
    assert_eq!(st, GeoflowStatus::Ok);
    assert_eq!(count, 21);
    // the zero-length arc is counted but not listed
    assert_eq!(n, 20);
    assert!((lengths[0] - 1.0).abs() < 1e-9);

    // too small a buffer still reports the total
    let st = unsafe { geoflow_count_geodesics(m, x, x, 2.5, 0, &mut count, ptr::null_mut(), 0, &mut n) };
    assert_eq!(st, GeoflowStatus::Ok);
    assert_eq!(n, 20);
    unsafe { geoflow_metric_free(m) };
}

#[test]
fn antipodal_count_is_degenerate() {
    let m = metric(r#"{"kind":"sphere","params":{}}"#);
    let x = GeoflowPoint {
        chart: 0,
        u: 0.0,
        v: 0.0,
    };
    let y = GeoflowPoint {
        chart: 1,
        u: 0.0,
        v: 0.0,
    };
    let (mut count, mut n) = (0usize, 0usize);
    let st = unsafe { geoflow_count_geodesics(m, x, y, 4.0, 0, &mut count, ptr::null_mut(), 0, &mut n) };
    assert_eq!(st, GeoflowStatus::Degenerate);
    unsafe { geoflow_metric_free(m) };
}

#[test]
fn series_fit_exponential_and_polynomial() {
    let t: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let v: Vec<f64> = t.iter().map(|t| (0.5 * t).exp()).collect();
    let mut s = ptr::null_mut();
    let st = unsafe { geoflow_series_new(GeoflowMethod::Mane, t.as_ptr(), v.as_ptr(), t.len(), &mut s) };
    assert_eq!(st, GeoflowStatus::Ok);
    let mut est = GeoflowEntropyEstimate {
        h: 0.0,
        ci: 0.0,
        window_lo: 0.0,
        window_hi: 0.0,
        exponential: 0,
        degree: 0,
        raw_slope: 0.0,
    };
    assert_eq!(unsafe { geoflow_fit_entropy(s, &mut est) }, GeoflowStatus::Ok);
    assert_eq!(est.exponential, 1);
    assert!((est.h - 0.5).abs() < 1e-9);
    unsafe { geoflow_series_free(s) };

    let v: Vec<f64> = t.iter().map(|t| 3.0 * t * t + 1.0).collect();
    unsafe { geoflow_series_new(GeoflowMethod::Mane, t.as_ptr(), v.as_ptr(), t.len(), &mut s) };
    assert_eq!(unsafe { geoflow_fit_entropy(s, &mut est) }, GeoflowStatus::Ok);
    assert_eq!(est.exponential, 0);
    assert_eq!(est.degree, 2);
    assert_eq!(est.h, 0.0);
    unsafe { geoflow_series_free(s) };
}

#[test]
fn jacobi_series_on_torus() {
    let m = metric(r#"{"kind":"torus","params":{}}"#);
    let t = [0.0, 1.0, 2.0];
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { geoflow_jacobi_det_series(m, t.as_ptr(), 3, 64, 1, &mut s) },
        GeoflowStatus::Ok
    );
    assert_eq!(unsafe { geoflow_series_len(s) }, 3);
    let mut small = [0.0; 2];
    assert_eq!(
        unsafe { geoflow_series_values(s, small.as_mut_ptr(), 2) },
        GeoflowStatus::BufferTooSmall
    );
    let mut vals = [0.0; 3];
    assert_eq!(
        unsafe { geoflow_series_values(s, vals.as_mut_ptr(), 3) },
        GeoflowStatus::Ok
    );
    for (t, v) in t.iter().zip(vals) {
        let exact = 2.0 * PI * (1.0 + t * t);
        assert!((v - exact).abs() < 1e-8 * exact, "{v} vs {exact}");
    }
    unsafe {
        geoflow_series_free(s);
        geoflow_metric_free(m);
    }
}

#[test]
fn short_series_is_invalid() {
    let t = [1.0, 2.0];
    let v = [1.0, 2.0];
    let mut s = ptr::null_mut();
    unsafe { geoflow_series_new(GeoflowMethod::JacobiDet, t.as_ptr(), v.as_ptr(), 2, &mut s) };
    let mut est = GeoflowEntropyEstimate {
        h: 0.0,
        ci: 0.0,
        window_lo: 0.0,
        window_hi: 0.0,
        exponential: 0,
        degree: 0,
        raw_slope: 0.0,
    };
    if !s.is_null() {
        assert_ne!(unsafe { geoflow_fit_entropy(s, &mut est) }, GeoflowStatus::Ok);
        unsafe { geoflow_series_free(s) };
    }
}

#[test]
fn f_at_i_and_tube_radius() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { geoflow_profile_constant(1.0, &mut p) }, GeoflowStatus::Ok);
    let (mut re, mut im, mut eig) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { geoflow_f_normal(p, 0.0, 1.0, &mut re, &mut im, &mut eig) },
        GeoflowStatus::Ok
    );
    assert!(re.abs() < 1e-10);
    assert!((im - 1f64.tanh()).abs() < 1e-9);
    assert!(eig > 0.0);
    // pole of tan on the real axis
    assert_eq!(
        unsafe { geoflow_f_normal(p, PI / 2.0, 0.0, &mut re, &mut im, ptr::null_mut()) },
        GeoflowStatus::PoleEncountered
    );
    unsafe { geoflow_profile_free(p) };

    unsafe { geoflow_profile_constant(-1.0, &mut p) };
    let (mut r, mut lb) = (0.0, 9u8);
    assert_eq!(
        unsafe { geoflow_tube_radius(p, 5.0, 50, &mut r, &mut lb) },
        GeoflowStatus::Ok
    );
    assert_eq!(lb, 0);
    assert!((r - PI / 2.0).abs() < 1e-3);
    unsafe { geoflow_profile_free(p) };
}

#[test]
fn profile_along_ellipsoid_geodesic() {
    let m = metric(r#"{"kind":"ellipsoid","params":{"a":[0.8,1.0,1.25]}}"#);
    let x = GeoflowPoint {
        chart: 0,
        u: 0.3,
        v: 0.1,
    };
    let mut theta = GeoflowPhasePoint {
        base: x,
        du: 0.0,
        dv: 0.0,
    };
    unsafe { geoflow_unit_vector(m, x, 0.4, &mut theta) };
    let mut p = ptr::null_mut();
    let st = unsafe { geoflow_profile_along_geodesic(m, theta, 3.0, 40, &mut p) };
    assert_eq!(st, GeoflowStatus::Ok, "{}", last_error());
    let (mut re, mut im) = (1.0, 1.0);
    assert_eq!(
        unsafe { geoflow_f_normal(p, 0.0, 0.0, &mut re, &mut im, ptr::null_mut()) },
        GeoflowStatus::Ok
    );
    assert!(re.abs() < 1e-12 && im.abs() < 1e-12);
    unsafe {
        geoflow_profile_free(p);
        geoflow_metric_free(m);
    }
}

#[test]
fn null_handles_are_rejected() {
    let mut x = 0.0;
    assert_eq!(
        unsafe { geoflow_metric_area(ptr::null(), &mut x) },
        GeoflowStatus::NullPointer
    );
    assert_eq!(unsafe { geoflow_series_len(ptr::null()) }, 0);
    unsafe {
        geoflow_metric_free(ptr::null_mut());
        geoflow_series_free(ptr::null_mut());
        geoflow_profile_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/geoflow.h")).unwrap();
    for name in [
        "geoflow_metric_from_json",
        "geoflow_count_geodesics",
        "geoflow_fit_entropy",
        "geoflow_tube_radius",
        "GEOFLOW_STATUS_OK",
        "typedef struct GeoflowMetric GeoflowMetric",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}
