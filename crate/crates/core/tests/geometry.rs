use std::f64::consts::PI;

use geoflow::geometry::custom;
use geoflow::{GeoflowError, MetricRegistry, MetricSpec, SurfaceMetric, SurfacePoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gaussian curvature of `Σ x_i² / a_i = 1` at an ambient point.
fn ellipsoid_curvature(a: [f64; 3], x: [f64; 3]) -> f64 {
    let s: f64 = (0..3).map(|k| x[k] * x[k] / (a[k] * a[k])).sum();
    1.0 / (a[0] * a[1] * a[2] * s * s)
}

fn point_in(m: &SurfaceMetric, seed: u64) -> SurfacePoint {
    m.sample_point(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_curvature_is_inverse_square_radius(r in 0.2f64..5.0, seed in any::<u64>()) {
        let m = SurfaceMetric::round_sphere(r).unwrap();
        let k = m.gauss_curvature(&point_in(&m, seed)).unwrap();
        prop_assert!((k * r * r - 1.0).abs() < 1e-8, "K = {}", k);
    }

    #[test]
    fn ellipsoid_curvature_matches_closed_form(
        a0 in 0.3f64..2.0, d1 in 0.01f64..1.0, d2 in 0.01f64..1.0, seed in any::<u64>()
    ) {
        let a = [a0, a0 + d1, a0 + d1 + d2];
        let m = SurfaceMetric::ellipsoid(a).unwrap();
        let p = point_in(&m, seed);
        let x = m.ambient(&p).unwrap();
        let on_surface: f64 = (0..3).map(|k| x[k] * x[k] / a[k]).sum();
        prop_assert!((on_surface - 1.0).abs() < 1e-12);
        let k = m.gauss_curvature(&p).unwrap();
        let want = ellipsoid_curvature(a, x);
        prop_assert!((k - want).abs() < 1e-6 * want, "{} vs {}", k, want);
    }

    #[test]
    fn metric_is_symmetric_positive_definite(seed in any::<u64>()) {
        for m in [
            SurfaceMetric::unit_sphere(),
            SurfaceMetric::unit_torus(),
            SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
            SurfaceMetric::paternain([0.8, 1.0, 1.25], 0.05, [1.0, 1.0, 1.0]).unwrap(),
        ] {
            let g = m.metric_eval(&point_in(&m, seed)).unwrap();
            prop_assert_eq!(g[0][1], g[1][0]);
            prop_assert!(g[0][0] > 0.0 && g[0][0] * g[1][1] - g[0][1] * g[1][0] > 0.0);
        }
    }

    #[test]
    fn christoffel_symbols_are_symmetric_in_lower_indices(seed in any::<u64>()) {
        for m in [
            SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
            SurfaceMetric::custom(custom::bumpy_torus()).unwrap(),
        ] {
            let gamma = m.christoffel(&point_in(&m, seed)).unwrap();
            for g in &gamma {
                prop_assert!((g[0][1] - g[1][0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ambient_round_trip(seed in any::<u64>()) {
        let m = SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap();
        let p = point_in(&m, seed);
        let x = m.ambient(&p).unwrap();
        let q = m.point_from_ambient(&x).unwrap();
        let y = m.ambient(&q).unwrap();
        let d: f64 = (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn chart_change_preserves_vector_length(seed in any::<u64>(), v0 in -1.0f64..1.0, v1 in -1.0f64..1.0) {
        let m = SurfaceMetric::unit_sphere();
        let p = point_in(&m, seed);
        let other = 1 - p.chart;
        if let Some(q) = m.to_chart(&p, other) {
            let w = m.transport_vector(&p, &q, [v0, v1]);
            let a = m.norm_sq(&p, [v0, v1]);
            let b = m.norm_sq(&q, w);
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }
}

#[test]
fn spd_at_a_thousand_points_for_every_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for m in [
        SurfaceMetric::unit_sphere(),
        SurfaceMetric::unit_torus(),
        SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
        SurfaceMetric::paternain([0.8, 1.0, 1.25], 0.05, [1.0, 1.0, 1.0]).unwrap(),
    ] {
        for _ in 0..1000 {
            let p = m.sample_point(&mut rng);
            m.metric_eval(&p).unwrap();
        }
    }
}

#[test]
fn custom_metrics_match_their_closed_forms() {
    let sph = SurfaceMetric::custom(custom::spherical_coordinates()).unwrap();
    let flat = SurfaceMetric::custom(custom::flat_periodic()).unwrap();
    let bumpy = SurfaceMetric::custom(custom::bumpy_torus()).unwrap();
    for (u, v) in [(0.4, 1.0), (1.3, 4.0), (2.5, 0.2)] {
        let k = sph.gauss_curvature(&SurfacePoint::new(0, u, v)).unwrap();
        assert!((k - 1.0).abs() < 1e-5, "{k}");
        let k = flat.gauss_curvature(&SurfacePoint::new(0, u / 4.0, v / 8.0)).unwrap();
        assert!(k.abs() < 1e-6, "{k}");
        // torus of revolution, tube radius 1/2 around a circle of radius 2
        let k = bumpy.gauss_curvature(&SurfacePoint::new(0, u, v)).unwrap();
        let want = u.cos() / (0.5 * (2.0 + 0.5 * u.cos()));
        assert!((k - want).abs() < 1e-5, "{k} vs {want}");
    }
}

#[test]
fn custom_sphere_has_builtin_christoffels_along_the_equator() {
    // on the equator of colatitude coordinates, Γ^θ_φφ = 0 and Γ^φ_θφ = 0
    let sph = SurfaceMetric::custom(custom::spherical_coordinates()).unwrap();
    let gamma = sph.christoffel(&SurfacePoint::new(0, PI / 2.0, 1.0)).unwrap();
    assert!(gamma[0][1][1].abs() < 1e-8);
    assert!(gamma[1][0][1].abs() < 1e-8);
}

#[test]
fn corrupt_metric_is_rejected_at_build() {
    let reg = MetricRegistry::with_builtins();
    let spec = MetricSpec::from_json(r#"{"kind":"custom","params":{"name":"corrupt-example"}}"#).unwrap();
    let err = spec.build(&reg).unwrap_err();
    assert!(matches!(err, GeoflowError::NonPositiveDefinite { .. }), "{err}");
    assert_eq!(err.kind(), "non-positive-definite");
}

#[test]
fn torus_scaling_scales_area() {
    let m = SurfaceMetric::flat_torus([[2.0, 0.0], [0.0, 2.0]]).unwrap();
    assert!((m.area() - 4.0).abs() < 1e-12);
    assert!((SurfaceMetric::unit_sphere().area() - 4.0 * PI).abs() < 1e-12);
    assert!(SurfaceMetric::flat_torus([[1.0, 2.0], [0.5, 1.0]]).is_err());
}

#[test]
fn spec_json_round_trip() {
    let reg = MetricRegistry::with_builtins();
    for text in [
        r#"{"kind":"round-sphere","params":{"radius":2.0}}"#,
        r#"{"kind":"flat-torus","params":{"basis":[[1.0,0.0],[0.3,1.0]]}}"#,
        r#"{"kind":"paternain","params":{"a":[0.8,1.0,1.25],"eps":0.05,"r":[1.0,1.0,1.0]}}"#,
        r#"{"kind":"custom","params":{"name":"bumpy-revolution"}}"#,
    ] {
        let spec = MetricSpec::from_json(text).unwrap();
        let again = MetricSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
        spec.build(&reg).unwrap();
    }
    let unknown = MetricSpec::from_json(r#"{"kind":"custom","params":{"name":"nope"}}"#).unwrap();
    assert!(matches!(unknown.build(&reg), Err(GeoflowError::UnknownCustomMetric(_))));
}
