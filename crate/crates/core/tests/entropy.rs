use std::f64::consts::PI;

use geoflow::counting::CountSettings;
use geoflow::entropy::{
    fit_entropy, fit_polynomial, jacobi_det_series, mane_series, spanning_series, GrowthClass, GrowthSeries, Method,
    PairSampling, SpanningMesh,
};
use geoflow::{GeoflowError, SurfaceMetric};
use proptest::prelude::*;

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn jacobi_det_at_zero_is_unit_tangent_bundle_volume() {
    for m in [
        SurfaceMetric::unit_sphere(),
        SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
        SurfaceMetric::unit_torus(),
    ] {
        let s = jacobi_det_series(&m, &[0.0, 1.0], 200, 3).unwrap();
        let vol = 2.0 * PI * m.area();
        assert!((s.values[0] - vol).abs() < 1e-9 * vol, "{} vs {vol}", s.values[0]);
    }
}

#[test]
fn sphere_jacobi_det_matches_closed_form() {
    // columns (T, 0, 1, 0) and (0, sin T, 0, cos T)
    let m = SurfaceMetric::unit_sphere();
    let t = grid(0.0, 12.0, 7);
    let s = jacobi_det_series(&m, &t, 100, 5).unwrap();
    for (h, v) in t.iter().zip(&s.values) {
        let exact = 8.0 * PI * PI * (1.0 + h * h).sqrt();
        assert!((v - exact).abs() < 1e-6 * exact, "T = {h}: {v} vs {exact}");
    }
}

#[test]
fn torus_scaling_keeps_zero_entropy() {
    let big = SurfaceMetric::flat_torus([[2.0, 0.0], [0.0, 2.0]]).unwrap();
    let t = grid(2.0, 30.0, 15);
    let s = jacobi_det_series(&big, &t, 50, 1).unwrap();
    for (h, v) in t.iter().zip(&s.values) {
        let exact = 2.0 * PI * 4.0 * (1.0 + h * h);
        assert!((v - exact).abs() < 1e-8 * exact);
    }
    let e = fit_entropy(&s).unwrap();
    assert_eq!(e.h, 0.0);
    assert_eq!(e.growth_class, GrowthClass::Polynomial { degree: 2 });
}

#[test]
fn slower_flow_has_proportionally_smaller_entropy() {
    let t = grid(1.0, 20.0, 20);
    let v: Vec<f64> = t.iter().map(|t| 3.0 * (0.6 * t).exp()).collect();
    let s = GrowthSeries::new(Method::Mane, t, v).unwrap();
    let h1 = fit_entropy(&s).unwrap().h;
    let h2 = fit_entropy(&s.rescale_time(2.0)).unwrap().h;
    assert!((h1 - 0.6).abs() < 1e-9);
    assert!((h2 - 0.3).abs() < 1e-9);
}

#[test]
fn torus_mane_series_is_disc_area() {
    let m = SurfaceMetric::unit_torus();
    let t = grid(0.5, 2.5, 5);
    let sampling = PairSampling {
        x_samples: 4,
        y_per_x: 60,
    };
    let s = mane_series(&m, &t, sampling, 2, CountSettings::default()).unwrap();
    for (h, v) in t.iter().zip(&s.values) {
        let exact = PI * h * h;
        assert!((v - exact).abs() < 0.05 * exact, "T = {h}: {v} vs {exact}");
    }
    assert_eq!(s.samples, 240);
    assert_eq!(s.dropped, 0);
}

#[test]
fn spanning_counts_shrink_as_radius_grows() {
    let m = SurfaceMetric::unit_sphere();
    let t = grid(0.5, 2.5, 5);
    let mesh = SpanningMesh::for_radius(&m, 1.0);
    let fine = spanning_series(&m, 1.0, &t, mesh).unwrap();
    let coarse = spanning_series(&m, 1.5, &t, mesh).unwrap();
    for (a, b) in fine.values.iter().zip(&coarse.values) {
        assert!(a >= b, "{a} < {b}");
    }
    for s in [&fine, &coarse] {
        let d = s.spanning.as_ref().unwrap();
        assert!(d.ordering_holds);
        for k in 0..t.len() {
            assert!(d.separated[k] as f64 >= s.values[k]);
            assert!(d.covering_double[k] as f64 <= s.values[k]);
        }
        assert!(d.covering_radius <= d.eps / 4.0);
    }
}

#[test]
fn coarse_mesh_is_refused() {
    let m = SurfaceMetric::unit_sphere();
    let mut mesh = SpanningMesh::for_radius(&m, 1.0);
    mesh.base_points = 20;
    let err = spanning_series(&m, 1.0, &grid(1.0, 3.0, 5), mesh).unwrap_err();
    assert!(matches!(err, GeoflowError::MeshTooCoarse { .. }), "{err}");
}

#[test]
fn non_monotone_series_is_flagged() {
    let t = grid(1.0, 10.0, 10);
    let v: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(k, t)| t * t + if k == 7 { -30.0 } else { 0.0 })
        .collect();
    let e = fit_entropy(&GrowthSeries::new(Method::Mane, t, v).unwrap()).unwrap();
    assert!(e.non_monotone);
}

#[test]
fn quadratic_with_large_constant_is_polynomial() {
    let t = grid(2.0, 30.0, 15);
    let v: Vec<f64> = t
        .iter()
        .map(|t| 8.343972361768207 + 0.03623380095999087 * t * t)
        .collect();
    let e = fit_entropy(&GrowthSeries::new(Method::Mane, t, v).unwrap()).unwrap();
    assert_eq!(e.h, 0.0, "{}", e.to_json());
}

#[test]
fn invalid_series_are_rejected() {
    assert!(GrowthSeries::new(Method::Mane, vec![1.0, 2.0], vec![1.0]).is_err());
    assert!(GrowthSeries::new(Method::Mane, vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
    assert!(GrowthSeries::new(Method::Mane, vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
}

#[test]
fn json_round_trip() {
    let s = GrowthSeries::new(Method::JacobiDet, grid(1.0, 5.0, 5), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let back: GrowthSeries = serde_json::from_str(&s.to_json()).unwrap();
    assert_eq!(back.values, s.values);
    let e = fit_entropy(&s).unwrap();
    let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
    for k in ["h", "ci", "fit_window", "growth_class"] {
        assert!(v.get(k).is_some(), "{k}");
    }
    assert_eq!(v["method"], "jacobi-det");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn polynomials_have_zero_entropy(c0 in 0.1f64..10.0, c1 in 0.0f64..5.0, c2 in 0.0f64..5.0) {
        let t = grid(2.0, 30.0, 15);
        let v: Vec<f64> = t.iter().map(|t| c0 + c1 * t + c2 * t * t).collect();
        let e = fit_entropy(&GrowthSeries::new(Method::Mane, t.clone(), v.clone()).unwrap()).unwrap();
        prop_assert_eq!(e.h, 0.0);
        let low_degree = matches!(e.growth_class, GrowthClass::Polynomial { degree } if degree <= 2);
        prop_assert!(low_degree);
        let fit = fit_polynomial(&t, &v, 2).unwrap();
        prop_assert!(fit.relative_residual < 1e-9);
    }

    #[test]
    fn exponentials_are_recovered(rate in 0.1f64..1.5, scale in 0.01f64..100.0) {
        let t = grid(1.0, 20.0, 20);
        let v: Vec<f64> = t.iter().map(|t| scale * (rate * t).exp()).collect();
        let e = fit_entropy(&GrowthSeries::new(Method::Mane, t, v).unwrap()).unwrap();
        let exponential = matches!(e.growth_class, GrowthClass::Exponential { .. });
        prop_assert!(exponential);
        prop_assert!((e.h - rate).abs() < 0.1 * rate);
    }

    #[test]
    fn time_rescaling_scales_rate(rate in 0.2f64..1.0, factor in 0.5f64..4.0) {
        let t = grid(1.0, 20.0, 20);
        let v: Vec<f64> = t.iter().map(|t| (rate * t).exp()).collect();
        let s = GrowthSeries::new(Method::Mane, t, v).unwrap();
        let h = fit_entropy(&s.rescale_time(factor)).unwrap().h;
        prop_assert!((h * factor - rate).abs() < 1e-9);
    }
}
