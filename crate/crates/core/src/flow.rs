//! Geodesic flow on the tangent bundle and its differential.
//!
//! The flow is integrated as a first-order system in chart coordinates,
//! `x' = v`, `v'^k = -Γ^k_ij v^i v^j`, with chart transitions applied between
//! accepted steps and the speed renormalised at every transition. Normal
//! Jacobi fields `b'' + K |γ'|^2 b = 0` ride along in the same state vector,
//! so the curvature is sampled exactly where the geodesic is.
//!
//! A Jacobi field is stored in the parallel frame `(e1, e2) = (γ'/|γ'|, n)`
//! as `J = a e1 + b e2`. The tangential part is affine in `t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GeoflowError, Result};
use crate::geometry::{quad, unit_normal_with, Christoffel, SurfaceMetric, SurfacePoint};
use crate::ode::{Dopri5, StepControl};

/// A point of the tangent bundle: base point plus chart velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub base: SurfacePoint,
    pub velocity: [f64; 2],
}

impl PhasePoint {
    pub fn new(base: SurfacePoint, velocity: [f64; 2]) -> Self {
        Self { base, velocity }
    }

    /// Unit vector at `p` making angle `angle` with the first coordinate
    /// direction, measured in an oriented orthonormal frame.
    pub fn unit(metric: &SurfaceMetric, p: SurfacePoint, angle: f64) -> Self {
        let [e1, e2] = orthonormal_frame(metric, &p);
        let (s, c) = angle.sin_cos();
        Self {
            base: p,
            velocity: [c * e1[0] + s * e2[0], c * e1[1] + s * e2[1]],
        }
    }

    pub fn speed_sq(&self, metric: &SurfaceMetric) -> f64 {
        metric.norm_sq(&self.base, self.velocity)
    }

    /// The same geodesic traversed backwards.
    pub fn reversed(&self) -> Self {
        Self {
            base: self.base,
            velocity: [-self.velocity[0], -self.velocity[1]],
        }
    }
}

/// Oriented orthonormal frame at `p` whose first vector is along `∂_1`.
pub fn orthonormal_frame(metric: &SurfaceMetric, p: &SurfacePoint) -> [[f64; 2]; 2] {
    let g = metric.metric_raw(p);
    let e1 = [1.0 / g[0][0].sqrt(), 0.0];
    [e1, unit_normal_with(&g, e1)]
}

/// Integrator settings shared by all trajectory computations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowSettings {
    pub tol: f64,
    pub h_max: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { tol: 1e-10, h_max: 0.1 }
    }
}

impl FlowSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// One recorded state along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSample {
    pub t: f64,
    pub point: PhasePoint,
    /// Normal Jacobi components `(b, b')` of the co-integrated fields.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normals: Vec<[f64; 2]>,
}

/// An integrated geodesic segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicArc {
    pub start: PhasePoint,
    pub length: f64,
    pub end: PhasePoint,
    pub samples: Vec<ArcSample>,
    /// Largest relative deviation `|g(v,v)/s0^2 - 1|` seen before renormalisation.
    pub energy_drift: f64,
}

impl GeodesicArc {
    /// Length of the sampled curve, by trapezoidal quadrature of the speed.
    pub fn arc_length(&self, metric: &SurfaceMetric) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let s0 = w[0].point.speed_sq(metric).sqrt();
                let s1 = w[1].point.speed_sq(metric).sqrt();
                0.5 * (s0 + s1) * (w[1].t - w[0].t)
            })
            .sum()
    }

    /// Writes `t, chart, u, v, du, dv, x, y, z` rows with a header.
    pub fn write_csv<W: Write>(&self, metric: &SurfaceMetric, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| GeoflowError::InvalidInput(format!("csv: {e}"));
        w.write_record(["t", "chart", "u", "v", "du", "dv", "x", "y", "z"])
            .map_err(io)?;
        for s in &self.samples {
            let amb = metric.ambient(&s.point.base);
            let mut row = vec![
                s.t.to_string(),
                s.point.base.chart.to_string(),
                s.point.base.coords[0].to_string(),
                s.point.base.coords[1].to_string(),
                s.point.velocity[0].to_string(),
                s.point.velocity[1].to_string(),
            ];
            for k in 0..3 {
                row.push(amb.map(|x| x[k].to_string()).unwrap_or_default());
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| GeoflowError::InvalidInput(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Jacobi field in the parallel frame `(γ'/|γ'|, n)` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiFrame {
    pub t: f64,
    pub j_tangential: f64,
    pub j_normal: f64,
    pub jdot_tangential: f64,
    pub jdot_normal: f64,
}

impl JacobiFrame {
    pub fn as_array(&self) -> [f64; 4] {
        [self.j_tangential, self.j_normal, self.jdot_tangential, self.jdot_normal]
    }
}

/// Result of a raw propagation.
#[derive(Debug, Clone)]
pub(crate) struct Propagation {
    pub end: PhasePoint,
    pub normals: Vec<[f64; 2]>,
    pub samples: Vec<ArcSample>,
    pub energy_drift: f64,
}

/// Where to record samples.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Record<'a> {
    Nothing,
    EveryStep,
    /// Exactly at the given increasing times (each in `[0, t_end]`).
    At(&'a [f64]),
}

/// Integrates the flow from `start` for time `t_end >= 0`, co-integrating
/// normal Jacobi fields with initial data `normals0`. The speed is held at
/// its initial value by renormalisation at chart transitions and at the end.
pub(crate) fn propagate(
    metric: &SurfaceMetric,
    start: &PhasePoint,
    t_end: f64,
    normals0: &[[f64; 2]],
    settings: FlowSettings,
    record: Record<'_>,
) -> Result<Propagation> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(GeoflowError::InvalidInput(format!(
            "flow time must be >= 0, got {t_end}"
        )));
    }
    if !metric.in_domain(&start.base) {
        return Err(GeoflowError::PointOutsideChart {
            chart: start.base.chart,
            u: start.base.coords[0],
            v: start.base.coords[1],
        });
    }
    let s0_sq = start.speed_sq(metric);
    if !(s0_sq > 0.0) {
        return Err(GeoflowError::InvalidInput("zero initial velocity".into()));
    }
    let nj = normals0.len();
    let want_k = nj > 0;
    let dim = 4 + 2 * nj;
    let mut y = vec![0.0; dim];
    y[0] = start.base.coords[0];
    y[1] = start.base.coords[1];
    y[2] = start.velocity[0];
    y[3] = start.velocity[1];
    for (k, n) in normals0.iter().enumerate() {
        y[4 + 2 * k] = n[0];
        y[5 + 2 * k] = n[1];
    }
    let mut chart = start.base.chart;

    let ctl = StepControl {
        rtol: settings.tol,
        atol: settings.tol,
        h_init: settings.h_max.min(1e-2),
        h_max: settings.h_max,
        max_steps: 20_000_000,
    };
    let mut stepper = Dopri5::new(dim, ctl);
    let mut samples = Vec::new();
    let snapshot = |t: f64, chart: usize, y: &[f64]| ArcSample {
        t,
        point: PhasePoint {
            base: SurfacePoint {
                chart,
                coords: [y[0], y[1]],
            },
            velocity: [y[2], y[3]],
        },
        normals: (0..nj).map(|k| [y[4 + 2 * k], y[5 + 2 * k]]).collect(),
    };
    let mut stop_idx = 0;
    match record {
        Record::EveryStep => samples.push(snapshot(0.0, chart, &y)),
        Record::At(stops) => {
            while stop_idx < stops.len() && stops[stop_idx] <= 0.0 {
                samples.push(snapshot(stops[stop_idx], chart, &y));
                stop_idx += 1;
            }
        }
        Record::Nothing => {}
    }

    let mut drift: f64 = 0.0;
    let mut t = 0.0;
    while t < t_end {
        let target = match record {
            Record::At(stops) if stop_idx < stops.len() => stops[stop_idx].min(t_end),
            _ => t_end,
        };
        let current_chart = chart;
        let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| -> Result<()> {
            let p = SurfacePoint {
                chart: current_chart,
                coords: [s[0], s[1]],
            };
            let geo = metric.local_raw(&p, want_k);
            let v = [s[2], s[3]];
            ds[0] = v[0];
            ds[1] = v[1];
            let acc = geodesic_acceleration(&geo.gamma, &v);
            ds[2] = acc[0];
            ds[3] = acc[1];
            if want_k {
                let k_eff = geo.curvature * quad(&geo.g, &v, &v);
                if !k_eff.is_finite() {
                    return Err(GeoflowError::InvalidInput("non-finite curvature".into()));
                }
                for j in 0..nj {
                    ds[4 + 2 * j] = s[5 + 2 * j];
                    ds[5 + 2 * j] = -k_eff * s[4 + 2 * j];
                }
            }
            Ok(())
        };
        t = stepper.step(&mut rhs, t, &mut y, target).map_err(|e| match e {
            GeoflowError::StepSizeUnderflow { h, .. } => GeoflowError::StepSizeUnderflow { t, h },
            other => other,
        })?;

        let p = SurfacePoint {
            chart,
            coords: [y[0], y[1]],
        };
        let v = [y[2], y[3]];
        let g = metric.metric_raw(&p);
        let ssq = quad(&g, &v, &v);
        drift = drift.max((ssq / s0_sq - 1.0).abs());
        match metric.transit(&p, v) {
            Ok(Some((q, w))) => {
                chart = q.chart;
                let scale = (s0_sq / metric.norm_sq(&q, w)).sqrt();
                y[0] = q.coords[0];
                y[1] = q.coords[1];
                y[2] = w[0] * scale;
                y[3] = w[1] * scale;
            }
            Ok(None) => {}
            Err(GeoflowError::LeftAtlas { .. }) => return Err(GeoflowError::LeftAtlas { t }),
            Err(e) => return Err(e),
        }
        if let Record::At(stops) = record {
            while stop_idx < stops.len() && stops[stop_idx] <= t {
                samples.push(snapshot(stops[stop_idx], chart, &y));
                stop_idx += 1;
            }
        } else if let Record::EveryStep = record {
            samples.push(snapshot(t, chart, &y));
        }
    }
    let p = SurfacePoint {
        chart,
        coords: [y[0], y[1]],
    };
    let v = [y[2], y[3]];
    let scale = (s0_sq / metric.norm_sq(&p, v)).sqrt();
    let end = PhasePoint {
        base: p,
        velocity: [v[0] * scale, v[1] * scale],
    };
    if let Some(last) = samples.last_mut() {
        if last.t == t_end {
            last.point = end;
        }
    }
    Ok(Propagation {
        end,
        normals: (0..nj).map(|k| [y[4 + 2 * k], y[5 + 2 * k]]).collect(),
        samples,
        energy_drift: drift,
    })
}

#[inline]
pub(crate) fn geodesic_acceleration(gamma: &Christoffel, v: &[f64; 2]) -> [f64; 2] {
    let mut a = [0.0; 2];
    for (k, ak) in a.iter_mut().enumerate() {
        *ak = -(gamma[k][0][0] * v[0] * v[0] + 2.0 * gamma[k][0][1] * v[0] * v[1] + gamma[k][1][1] * v[1] * v[1]);
    }
    a
}

fn require_unit(metric: &SurfaceMetric, theta: &PhasePoint) -> Result<()> {
    if !metric.in_domain(&theta.base) {
        return Err(GeoflowError::PointOutsideChart {
            chart: theta.base.chart,
            u: theta.base.coords[0],
            v: theta.base.coords[1],
        });
    }
    let s = theta.speed_sq(metric);
    if (s - 1.0).abs() > 1e-9 {
        return Err(GeoflowError::NotUnitSpeed { speed_sq: s });
    }
    Ok(())
}

/// Integrates the unit-speed geodesic with initial condition `theta` up to
/// length `length`, recording every accepted step.
pub fn integrate_geodesic(metric: &SurfaceMetric, theta: &PhasePoint, length: f64, tol: f64) -> Result<GeodesicArc> {
    require_unit(metric, theta)?;
    integrate_flow(metric, theta, length, FlowSettings::with_tol(tol))
}

/// Like [`integrate_geodesic`] for any nonzero initial speed; the flow time
/// is `time` and the speed is conserved.
pub fn integrate_flow(
    metric: &SurfaceMetric,
    theta: &PhasePoint,
    time: f64,
    settings: FlowSettings,
) -> Result<GeodesicArc> {
    let prop = propagate(metric, theta, time, &[], settings, Record::EveryStep)?;
    Ok(GeodesicArc {
        start: *theta,
        length: time * theta.speed_sq(metric).sqrt(),
        end: prop.end,
        samples: prop.samples,
        energy_drift: prop.energy_drift,
    })
}

/// Propagates a Jacobi field along `arc`, reporting it at every sample time.
/// `j0` and `j0dot` are `(tangential, normal)` components at `t = 0`.
pub fn jacobi_propagate(
    metric: &SurfaceMetric,
    arc: &GeodesicArc,
    j0: [f64; 2],
    j0dot: [f64; 2],
    tol: f64,
) -> Result<Vec<JacobiFrame>> {
    let times: Vec<f64> = arc.samples.iter().map(|s| s.t).collect();
    let t_end = times.last().copied().unwrap_or(0.0);
    let prop = propagate(
        metric,
        &arc.start,
        t_end,
        &[[j0[1], j0dot[1]]],
        FlowSettings::with_tol(tol),
        Record::At(&times),
    )?;
    Ok(prop
        .samples
        .iter()
        .map(|s| JacobiFrame {
            t: s.t,
            j_tangential: j0[0] + s.t * j0dot[0],
            j_normal: s.normals[0][0],
            jdot_tangential: j0dot[0],
            jdot_normal: s.normals[0][1],
        })
        .collect())
}

/// Jacobi field at time `t` only.
pub fn jacobi_at(
    metric: &SurfaceMetric,
    theta: &PhasePoint,
    t: f64,
    j0: [f64; 2],
    j0dot: [f64; 2],
    settings: FlowSettings,
) -> Result<(PhasePoint, JacobiFrame)> {
    let prop = propagate(metric, theta, t, &[[j0[1], j0dot[1]]], settings, Record::Nothing)?;
    Ok((
        prop.end,
        JacobiFrame {
            t,
            j_tangential: j0[0] + t * j0dot[0],
            j_normal: prop.normals[0][0],
            jdot_tangential: j0dot[0],
            jdot_normal: prop.normals[0][1],
        },
    ))
}

/// Gram volume of the image of the vertical subspace under the flow
/// differential: columns `(J_i(T), J_i'(T))` for `J_i(0) = 0, J_i'(0) = e_i`
/// in the product of orthonormal frames, `sqrt(det(M^T M))`.
pub fn vertical_determinant(metric: &SurfaceMetric, theta: &PhasePoint, time: f64, tol: f64) -> Result<f64> {
    require_unit(metric, theta)?;
    vertical_determinant_unchecked(metric, theta, time, FlowSettings::with_tol(tol))
}

pub(crate) fn vertical_determinant_unchecked(
    metric: &SurfaceMetric,
    theta: &PhasePoint,
    time: f64,
    settings: FlowSettings,
) -> Result<f64> {
    let prop = propagate(metric, theta, time, &[[0.0, 1.0]], settings, Record::Nothing)?;
    let [u, du] = prop.normals[0];
    // columns in (tan, normal, tan', normal') coordinates
    let c1 = [time, 0.0, 1.0, 0.0];
    let c2 = [0.0, u, 0.0, du];
    Ok(gram_volume(&[c1, c2]))
}

/// `sqrt(det(M^T M))` for a 4x2 matrix given by its columns.
pub fn gram_volume(cols: &[[f64; 4]; 2]) -> f64 {
    let d = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let g11 = d(&cols[0], &cols[0]);
    let g12 = d(&cols[0], &cols[1]);
    let g22 = d(&cols[1], &cols[1]);
    (g11 * g22 - g12 * g12).max(0.0).sqrt()
}

/// Connection map `K_θ(ξ) = dv + Γ(x)(v, dx)` for a tangent vector
/// `ξ = (dx, dv)` of TM in chart coordinates.
pub fn connection_map(metric: &SurfaceMetric, theta: &PhasePoint, dx: [f64; 2], dv: [f64; 2]) -> [f64; 2] {
    let gamma = metric.local_raw(&theta.base, false).gamma;
    let v = theta.velocity;
    let mut out = dv;
    for (k, o) in out.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                *o += gamma[k][i][j] * v[i] * dx[j];
            }
        }
    }
    out
}

/// Horizontal lift `L_θ(w)` as a chart tangent vector `(dx, dv)` of TM.
pub fn horizontal_lift(metric: &SurfaceMetric, theta: &PhasePoint, w: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let k = connection_map(metric, theta, w, [0.0, 0.0]);
    (w, [-k[0], -k[1]])
}

/// The splitting `ξ -> (π_* ξ, K ξ)`.
pub fn split(metric: &SurfaceMetric, theta: &PhasePoint, dx: [f64; 2], dv: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    (dx, connection_map(metric, theta, dx, dv))
}

/// Inverse of [`split`]: the chart vector `(dx, dv)` with given horizontal
/// and vertical parts.
pub fn unsplit(
    metric: &SurfaceMetric,
    theta: &PhasePoint,
    horizontal: [f64; 2],
    vertical: [f64; 2],
) -> ([f64; 2], [f64; 2]) {
    let (dx, dv_h) = horizontal_lift(metric, theta, horizontal);
    (dx, [dv_h[0] + vertical[0], dv_h[1] + vertical[1]])
}

/// Converts frame components `(tangential, normal)` at `theta` into a chart vector.
pub fn frame_to_chart(metric: &SurfaceMetric, theta: &PhasePoint, comps: [f64; 2]) -> [f64; 2] {
    let s = theta.speed_sq(metric).sqrt();
    let e1 = [theta.velocity[0] / s, theta.velocity[1] / s];
    let e2 = metric.unit_normal(&theta.base, theta.velocity);
    [comps[0] * e1[0] + comps[1] * e2[0], comps[0] * e1[1] + comps[1] * e2[1]]
}

/// Frame components `(tangential, normal)` of a chart vector at `theta`.
pub fn chart_to_frame(metric: &SurfaceMetric, theta: &PhasePoint, w: [f64; 2]) -> [f64; 2] {
    let g = metric.metric_raw(&theta.base);
    let s = quad(&g, &theta.velocity, &theta.velocity).sqrt();
    let e1 = [theta.velocity[0] / s, theta.velocity[1] / s];
    let e2 = unit_normal_with(&g, theta.velocity);
    [quad(&g, &w, &e1), quad(&g, &w, &e2)]
}

/// Expresses `p` relative to the reference base point: chart offset and
/// velocity, both in the reference chart.
fn relative_to(metric: &SurfaceMetric, reference: &SurfacePoint, p: &PhasePoint) -> Option<([f64; 2], [f64; 2])> {
    if metric.is_embedded() {
        let q = metric.to_chart(&p.base, reference.chart)?;
        let v = metric.transport_vector(&p.base, &q, p.velocity);
        Some((
            [q.coords[0] - reference.coords[0], q.coords[1] - reference.coords[1]],
            v,
        ))
    } else {
        Some((metric.displacement(reference, &p.base)?, p.velocity))
    }
}

/// Central finite-difference differential of the time-`t` flow applied to
/// the tangent vector whose splitting is `(J(0), J'(0))` (frame components),
/// returned as a Jacobi frame at time `t`.
pub fn flow_differential_fd(
    metric: &SurfaceMetric,
    theta: &PhasePoint,
    t: f64,
    j0: [f64; 2],
    j0dot: [f64; 2],
    step: f64,
    settings: FlowSettings,
) -> Result<JacobiFrame> {
    let h_vec = frame_to_chart(metric, theta, j0);
    let k_vec = frame_to_chart(metric, theta, j0dot);
    let (dx, dv) = unsplit(metric, theta, h_vec, k_vec);
    let shifted = |s: f64| -> Result<PhasePoint> {
        let start = PhasePoint {
            base: SurfacePoint {
                chart: theta.base.chart,
                coords: [theta.base.coords[0] + s * dx[0], theta.base.coords[1] + s * dx[1]],
            },
            velocity: [theta.velocity[0] + s * dv[0], theta.velocity[1] + s * dv[1]],
        };
        Ok(propagate(metric, &start, t, &[], settings, Record::Nothing)?.end)
    };
    let center = shifted(0.0)?;
    let plus = shifted(step)?;
    let minus = shifted(-step)?;
    let reference = center.base;
    let fail = || GeoflowError::InvalidInput("perturbed endpoints not comparable in one chart".into());
    let (op, vp) = relative_to(metric, &reference, &plus).ok_or_else(fail)?;
    let (om, vm) = relative_to(metric, &reference, &minus).ok_or_else(fail)?;
    let (_, vc) = relative_to(metric, &reference, &center).ok_or_else(fail)?;
    let ref_state = PhasePoint {
        base: reference,
        velocity: vc,
    };
    let ddx = [(op[0] - om[0]) / (2.0 * step), (op[1] - om[1]) / (2.0 * step)];
    let ddv = [(vp[0] - vm[0]) / (2.0 * step), (vp[1] - vm[1]) / (2.0 * step)];
    let (hx, kx) = split(metric, &ref_state, ddx, ddv);
    let j = chart_to_frame(metric, &ref_state, hx);
    let jd = chart_to_frame(metric, &ref_state, kx);
    Ok(JacobiFrame {
        t,
        j_tangential: j[0],
        j_normal: j[1],
        jdot_tangential: jd[0],
        jdot_normal: jd[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_torus_straight_line() {
        let t = SurfaceMetric::unit_torus();
        let theta = PhasePoint::new(SurfacePoint::new(0, 0.0, 0.0), [1.0, 0.0]);
        let arc = integrate_geodesic(&t, &theta, 0.5, 1e-10).unwrap();
        assert!((arc.end.base.coords[0] - 0.5).abs() < 1e-12);
        assert!(arc.end.base.coords[1].abs() < 1e-12);
        assert_eq!(arc.samples[0].point, theta);
    }

    #[test]
    fn great_circles_close() {
        let s = SurfaceMetric::unit_sphere();
        let theta = PhasePoint::unit(&s, SurfacePoint::new(0, 0.3, -0.2), 0.7);
        let arc = integrate_geodesic(&s, &theta, 2.0 * PI, 1e-11).unwrap();
        let a = s.ambient(&theta.base).unwrap();
        let b = s.ambient(&arc.end.base).unwrap();
        let d: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-6, "d = {d}");
        assert!((arc.arc_length(&s) - 2.0 * PI).abs() < 1e-6 * 2.0 * PI);
    }

    #[test]
    fn non_unit_start_is_rejected() {
        let s = SurfaceMetric::unit_sphere();
        let theta = PhasePoint::new(SurfacePoint::new(0, 0.0, 0.0), [1.0, 0.0]);
        assert_eq!(
            integrate_geodesic(&s, &theta, 1.0, 1e-9).unwrap_err().kind(),
            "not-unit-speed"
        );
    }

    #[test]
    fn sphere_normal_jacobi_is_sine() {
        let s = SurfaceMetric::unit_sphere();
        let theta = PhasePoint::unit(&s, SurfacePoint::new(1, -0.5, 0.1), 2.0);
        let arc = integrate_geodesic(&s, &theta, 4.0, 1e-11).unwrap();
        let frames = jacobi_propagate(&s, &arc, [0.0, 0.0], [0.0, 1.0], 1e-11).unwrap();
        assert_eq!(frames.len(), arc.samples.len());
        for f in &frames {
            assert!((f.j_normal - f.t.sin()).abs() < 1e-6);
            assert!((f.jdot_normal - f.t.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn vertical_determinant_closed_forms() {
        let t = SurfaceMetric::unit_torus();
        let theta = PhasePoint::unit(&t, SurfacePoint::new(0, 0.2, 0.4), 0.3);
        for time in [0.0, 1.0, 7.5] {
            let v = vertical_determinant(&t, &theta, time, 1e-10).unwrap();
            assert!((v - (1.0 + time * time)).abs() < 1e-9 * (1.0 + time * time));
        }
        let s = SurfaceMetric::unit_sphere();
        let theta = PhasePoint::unit(&s, SurfacePoint::new(0, 0.2, 0.4), 0.3);
        let v = vertical_determinant(&s, &theta, PI, 1e-11).unwrap();
        assert!((v - (1.0 + PI * PI).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn splitting_is_inverse_pair() {
        let e = SurfaceMetric::ellipsoid([0.8, 1.0, 1.25]).unwrap();
        let theta = PhasePoint::unit(&e, SurfacePoint::new(0, 0.3, 0.6), 1.1);
        let (dx, dv) = unsplit(&e, &theta, [0.4, -0.2], [1.5, 0.7]);
        let (h, k) = split(&e, &theta, dx, dv);
        assert!((h[0] - 0.4).abs() < 1e-15 && (h[1] + 0.2).abs() < 1e-15);
        assert!((k[0] - 1.5).abs() < 1e-14 && (k[1] - 0.7).abs() < 1e-14);
        // vertical vectors have no horizontal part; horizontal lifts have no vertical part
        let (h, _) = split(&e, &theta, [0.0, 0.0], [1.0, 2.0]);
        assert_eq!(h, [0.0, 0.0]);
        let (lx, lv) = horizontal_lift(&e, &theta, [0.3, 0.1]);
        let (_, k) = split(&e, &theta, lx, lv);
        assert!(k[0].abs() < 1e-15 && k[1].abs() < 1e-15);
    }

    #[test]
    fn arc_csv_has_header_and_rows() {
        let s = SurfaceMetric::unit_sphere();
        let theta = PhasePoint::unit(&s, SurfacePoint::new(0, 0.0, 0.0), 0.0);
        let arc = integrate_geodesic(&s, &theta, 1.0, 1e-9).unwrap();
        let mut buf = Vec::new();
        arc.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,chart,u,v,du,dv,x,y,z");
        assert_eq!(lines.count(), arc.samples.len());
    }
}
