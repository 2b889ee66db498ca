use std::f64::consts::PI;

use geoflow::flow::{
    flow_differential_fd, integrate_flow, integrate_geodesic, jacobi_at, jacobi_propagate, FlowSettings, PhasePoint,
};
use geoflow::geometry::Mat3;
use geoflow::{SurfaceMetric, SurfacePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Complete elliptic integral of the second kind via the AGM iteration.
fn elliptic_e(m: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    let mut c_sum = 0.5 * m;
    let mut pow = 0.5;
    for _ in 0..40 {
        let c = 0.5 * (a - b);
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        c_sum += pow * c * c;
        if c.abs() < 1e-17 {
            break;
        }
    }
    PI / (2.0 * a) * (1.0 - c_sum)
}

fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (major, minor) = if a > b { (a, b) } else { (b, a) };
    4.0 * major * elliptic_e(1.0 - (minor / major).powi(2))
}

fn from_ambient(m: &SurfaceMetric, x: [f64; 3], w: [f64; 3]) -> PhasePoint {
    let p = m.point_from_ambient(&x).unwrap();
    let v = m.vector_from_ambient(&p, &w).unwrap();
    let s = m.norm_sq(&p, v).sqrt();
    PhasePoint::new(p, [v[0] / s, v[1] / s])
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn builtins() -> Vec<(&'static str, SurfaceMetric)> {
    vec![
        ("sphere", SurfaceMetric::unit_sphere()),
        ("torus", SurfaceMetric::unit_torus()),
        ("ellipsoid", SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap()),
        (
            "paternain",
            SurfaceMetric::paternain([0.8, 1.0, 1.25], 0.05, [1.0, 1.0, 1.0]).unwrap(),
        ),
    ]
}

fn random_state(m: &SurfaceMetric, rng: &mut ChaCha8Rng) -> PhasePoint {
    let p = m.sample_point(rng);
    PhasePoint::unit(m, p, rng.gen_range(0.0..2.0 * PI))
}

#[test]
fn principal_plane_geodesic_closes_after_ellipse_perimeter() {
    let a = [0.8, 1.0, 1.25];
    let m = SurfaceMetric::ellipsoid(a).unwrap();
    let x0 = [0.0, a[1].sqrt(), 0.0];
    let theta = from_ambient(&m, x0, [0.0, 0.0, 1.0]);
    let period = ellipse_perimeter(a[1].sqrt(), a[2].sqrt());
    let arc = integrate_geodesic(&m, &theta, period, 1e-12).unwrap();
    let end = m.ambient(&arc.end.base).unwrap();
    assert!(dist3(end, x0) < 1e-7, "miss {}", dist3(end, x0));
    // stays in the plane x = 0
    for s in &arc.samples {
        assert!(m.ambient(&s.point.base).unwrap()[0].abs() < 1e-8);
    }
    // half a period lands on the opposite vertex
    let half = integrate_geodesic(&m, &theta, 0.5 * period, 1e-12).unwrap();
    let h = m.ambient(&half.end.base).unwrap();
    assert!(dist3(h, [0.0, -a[1].sqrt(), 0.0]) < 1e-7);
}

#[test]
fn polyline_length_matches_horizon() {
    for (name, m) in builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = random_state(&m, &mut rng);
        let arc = integrate_geodesic(&m, &theta, 12.0, 1e-10).unwrap();
        assert!((arc.arc_length(&m) - 12.0).abs() < 1e-6 * 12.0, "{name}");
        assert_eq!(arc.samples[0].point, theta);
    }
}

#[test]
fn energy_drift_over_long_horizon() {
    for m in [
        SurfaceMetric::unit_sphere(),
        SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let theta = random_state(&m, &mut rng);
            let arc = integrate_geodesic(&m, &theta, 100.0, FlowSettings::default().tol).unwrap();
            assert!(arc.energy_drift < 1e-6, "drift {}", arc.energy_drift);
        }
    }
}

#[test]
fn flow_differential_matches_jacobi_fields() {
    let settings = FlowSettings::with_tol(1e-12);
    for (name, m) in builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..12 {
            let theta = random_state(&m, &mut rng);
            let j0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let j0dot = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (_, jac) = jacobi_at(&m, &theta, 5.0, j0, j0dot, settings).unwrap();
            let fd = flow_differential_fd(&m, &theta, 5.0, j0, j0dot, 1e-5, settings).unwrap();
            let a = jac.as_array();
            let b = fd.as_array();
            let num: f64 = (0..4).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
        assert!(worst < 1e-3, "{name}: {worst}");
    }
}

#[test]
fn tangential_component_is_affine_and_wronskian_constant() {
    let m = SurfaceMetric::paternain([0.8, 1.0, 1.25], 0.05, [1.0, 1.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let theta = random_state(&m, &mut rng);
    let arc = integrate_geodesic(&m, &theta, 20.0, 1e-11).unwrap();
    let u = jacobi_propagate(&m, &arc, [0.3, 1.0], [-0.2, 0.0], 1e-11).unwrap();
    let w = jacobi_propagate(&m, &arc, [0.0, 0.0], [0.0, 1.0], 1e-11).unwrap();
    let w0 = u[0].j_normal * w[0].jdot_normal - w[0].j_normal * u[0].jdot_normal;
    for (a, b) in u.iter().zip(&w) {
        assert!((a.j_tangential - (0.3 - 0.2 * a.t)).abs() < 1e-8);
        let wr = a.j_normal * b.jdot_normal - b.j_normal * a.jdot_normal;
        assert!((wr - w0).abs() < 1e-7 * w0.abs(), "{wr} vs {w0}");
    }
}

#[test]
fn rotated_atlas_gives_same_geodesic() {
    let (c, s) = (0.6f64, 0.8f64);
    let rot: Mat3 = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
    let rot2: Mat3 = [[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]];
    for m in [
        SurfaceMetric::unit_sphere(),
        SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap(),
        SurfaceMetric::paternain([0.8, 1.0, 1.25], 0.05, [1.0, 1.0, 1.0]).unwrap(),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for r in [rot, rot2] {
            let other = m.with_atlas_rotation(r).unwrap();
            let theta = random_state(&m, &mut rng);
            let (x, w) = m.ambient_vector(&theta.base, theta.velocity).unwrap();
            let theta2 = from_ambient(&other, x, w);
            let e1 = integrate_geodesic(&m, &theta, 5.0, 1e-13).unwrap().end;
            let e2 = integrate_geodesic(&other, &theta2, 5.0, 1e-13).unwrap().end;
            let d = dist3(m.ambient(&e1.base).unwrap(), other.ambient(&e2.base).unwrap());
            assert!(d < 1e-8, "atlas mismatch {d}");
        }
    }
}

#[test]
fn flow_preserves_non_unit_speed() {
    let m = SurfaceMetric::unit_sphere();
    let theta = PhasePoint::new(SurfacePoint::new(0, 0.1, 0.2), [0.9, -0.4]);
    let s0 = theta.speed_sq(&m);
    let arc = integrate_flow(&m, &theta, 3.0, FlowSettings::default()).unwrap();
    assert!((arc.end.speed_sq(&m) - s0).abs() < 1e-12);
}
