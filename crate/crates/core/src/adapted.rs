//! f-matrices of the adapted complex structure along a geodesic.
//!
//! Along a unit-speed geodesic the normal Jacobi equation is
//! `u'' + K(σ) u = 0`. With `ξ` (`u(0) = 1, u'(0) = 0`) and `η`
//! (`u(0) = 0, u'(0) = 1`) the normal entry of `φ` is `η/ξ`; the tangential
//! entry is `σ`. Continuing the equation to complex arc length `z = σ + iτ`
//! gives `f(z) = diag(η(z)/ξ(z), z)`. Inside the tube `Im f` is positive
//! definite; the first `τ` where that fails bounds the tube radius.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoflowError, Result};
use crate::flow::{propagate, FlowSettings, PhasePoint, Record};
use crate::geometry::SurfaceMetric;
use crate::ode::{Dopri5, StepControl};

type C = Complex64;

/// Analytic curvature functions of complex arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum NamedProfile {
    /// `mean + amplitude · cos(frequency · w)`
    Trigonometric { mean: f64, amplitude: f64, frequency: f64 },
    /// `depth · sech²(w / width)`; poles at `Im w = ±π·width/2`.
    SechSquared { depth: f64, width: f64 },
}

/// Gaussian curvature as a function of (complex) arc length along a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurvatureProfile {
    Constant {
        k: f64,
    },
    ClosedForm {
        form: NamedProfile,
    },
    /// Chebyshev series on `range`, trusted for `|Im w| ≤ strip_half_width`
    /// with `Re w` inside the range.
    ChebyshevFit {
        coefficients: Vec<f64>,
        range: (f64, f64),
        strip_half_width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
    },
}

impl CurvatureProfile {
    pub fn constant(k: f64) -> Self {
        CurvatureProfile::Constant { k }
    }

    /// Interpolates `f` at `degree + 1` Chebyshev nodes of `[a, b]`. The
    /// validity strip is a quarter of the range wide on each side.
    pub fn chebyshev_fit(f: impl Fn(f64) -> f64, a: f64, b: f64, degree: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(GeoflowError::InvalidInput(
                "Chebyshev range must be a finite interval".into(),
            ));
        }
        if !(a <= 0.0 && 0.0 <= b) {
            return Err(GeoflowError::InvalidInput("Chebyshev range must contain 0".into()));
        }
        let n = degree + 1;
        let nodes: Vec<f64> = (0..n).map(|k| (PI * (k as f64 + 0.5) / n as f64).cos()).collect();
        let values: Vec<f64> = nodes.iter().map(|x| f(0.5 * (a + b) + 0.5 * (b - a) * x)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeoflowError::InvalidInput("non-finite curvature sample".into()));
        }
        let coefficients = (0..n)
            .map(|j| {
                let s: f64 = (0..n)
                    .map(|k| values[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                if j == 0 {
                    s / n as f64
                } else {
                    2.0 * s / n as f64
                }
            })
            .collect();
        Ok(CurvatureProfile::ChebyshevFit {
            coefficients,
            range: (a, b),
            strip_half_width: 0.25 * (b - a),
            source: None,
        })
    }

    /// Fits the curvature along the geodesic through `theta` for arc length
    /// in `[-half_length, half_length]`.
    pub fn along_geodesic(metric: &SurfaceMetric, theta: &PhasePoint, half_length: f64, degree: usize) -> Result<Self> {
        check_unit(metric, theta)?;
        if !(half_length > 0.0) {
            return Err(GeoflowError::InvalidInput("half length must be > 0".into()));
        }
        let n = degree + 1;
        let nodes: Vec<f64> = (0..n)
            .map(|k| half_length * (PI * (k as f64 + 0.5) / n as f64).cos())
            .collect();
        let forward: Vec<f64> = nodes.iter().rev().filter(|s| **s >= 0.0).cloned().collect();
        let backward: Vec<f64> = nodes.iter().filter(|s| **s < 0.0).map(|s| -s).collect();
        let settings = FlowSettings::with_tol(1e-12);
        let curv = |start: &PhasePoint, times: &[f64]| -> Result<Vec<f64>> {
            if times.is_empty() {
                return Ok(Vec::new());
            }
            let prop = propagate(metric, start, times[times.len() - 1], &[], settings, Record::At(times))?;
            prop.samples
                .iter()
                .map(|s| metric.gauss_curvature(&s.point.base))
                .collect()
        };
        let kf = curv(theta, &forward)?;
        let kb = curv(&theta.reversed(), &backward)?;
        let lookup = move |s: f64| -> f64 {
            if s >= 0.0 {
                let i = forward.iter().position(|x| *x == s).expect("node");
                kf[i]
            } else {
                let i = backward.iter().position(|x| *x == -s).expect("node");
                kb[i]
            }
        };
        let mut profile = Self::chebyshev_fit(lookup, -half_length, half_length, degree)?;
        if let CurvatureProfile::ChebyshevFit { source, .. } = &mut profile {
            *source = Some(match metric.spec() {
                Some(spec) => format!(
                    "{} at chart {} ({}, {})",
                    spec.to_json(),
                    theta.base.chart,
                    theta.base.coords[0],
                    theta.base.coords[1]
                ),
                None => format!("{} geodesic", metric.kind_name()),
            });
        }
        Ok(profile)
    }

    /// Half-width of the strip around the real axis where the profile may
    /// be evaluated.
    pub fn strip_half_width(&self) -> f64 {
        match self {
            CurvatureProfile::Constant { .. } => f64::INFINITY,
            CurvatureProfile::ClosedForm { form } => match form {
                NamedProfile::Trigonometric { .. } => f64::INFINITY,
                NamedProfile::SechSquared { width, .. } => 0.5 * PI * width.abs(),
            },
            CurvatureProfile::ChebyshevFit { strip_half_width, .. } => *strip_half_width,
        }
    }

    /// Real arc-length range over which the profile is meaningful.
    pub fn real_range(&self) -> (f64, f64) {
        match self {
            CurvatureProfile::ChebyshevFit { range, .. } => *range,
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Whether the segment `0 → z` stays where the profile is trusted.
    pub fn contains(&self, z: C) -> bool {
        let (a, b) = self.real_range();
        let w = self.strip_half_width();
        match self {
            CurvatureProfile::ClosedForm {
                form: NamedProfile::SechSquared { .. },
            } => z.im.abs() < w,
            _ => z.im.abs() <= w && a <= z.re && z.re <= b,
        }
    }

    /// `K(w)`; no strip check.
    pub fn eval(&self, w: C) -> C {
        match self {
            CurvatureProfile::Constant { k } => C::new(*k, 0.0),
            CurvatureProfile::ClosedForm { form } => match form {
                NamedProfile::Trigonometric {
                    mean,
                    amplitude,
                    frequency,
                } => *mean + *amplitude * (w * *frequency).cos(),
                NamedProfile::SechSquared { depth, width } => {
                    let c = (w / *width).cosh();
                    *depth / (c * c)
                }
            },
            CurvatureProfile::ChebyshevFit {
                coefficients, range, ..
            } => {
                let x = (w * 2.0 - (range.0 + range.1)) / (range.1 - range.0);
                // Clenshaw
                let (mut b1, mut b2) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
                for c in coefficients.iter().skip(1).rev() {
                    let b0 = x * 2.0 * b1 - b2 + *c;
                    b2 = b1;
                    b1 = b0;
                }
                x * b1 - b2 + coefficients.first().copied().unwrap_or(0.0)
            }
        }
    }
}

/// The two fundamental solutions at `z` with their `w`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fundamental {
    pub xi: C,
    pub xi_prime: C,
    pub eta: C,
    pub eta_prime: C,
    /// Largest `|ξη' − ηξ' − 1| / max(1, |ξη'| + |ηξ'|)` seen along the path.
    pub wronskian_drift: f64,
}

const ODE_TOL: f64 = 1e-13;

/// Integrates `u'' + K u = 0` along the straight segment `0 → z`.
pub fn fundamental_solutions(profile: &CurvatureProfile, z: C) -> Result<Fundamental> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(GeoflowError::InvalidInput("z must be finite".into()));
    }
    if !profile.contains(z) {
        return Err(GeoflowError::OutsideValidityStrip { re: z.re, im: z.im });
    }
    // state: ξ, ξ', η, η' as (re, im) pairs; s ∈ [0, 1] parametrises w = s z
    let mut y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    if z.norm() == 0.0 {
        return Ok(Fundamental {
            xi: C::new(1.0, 0.0),
            xi_prime: C::new(0.0, 0.0),
            eta: C::new(0.0, 0.0),
            eta_prime: C::new(1.0, 0.0),
            wronskian_drift: 0.0,
        });
    }
    let mut rhs = |s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let k = profile.eval(z * s);
        for off in [0, 4] {
            let u = C::new(y[off], y[off + 1]);
            let du = C::new(y[off + 2], y[off + 3]);
            let a = z * du;
            let b = -(z * k * u);
            dy[off] = a.re;
            dy[off + 1] = a.im;
            dy[off + 2] = b.re;
            dy[off + 3] = b.im;
        }
        Ok(())
    };
    let ctl = StepControl {
        h_max: 0.05,
        ..StepControl::with_tol(ODE_TOL)
    };
    let mut stepper = Dopri5::new(8, ctl);
    let wronskian = |y: &[f64; 8]| {
        let (xi, dxi, eta, deta) = (
            C::new(y[0], y[1]),
            C::new(y[2], y[3]),
            C::new(y[4], y[5]),
            C::new(y[6], y[7]),
        );
        let (a, b) = (xi * deta, eta * dxi);
        ((a - b - 1.0).norm(), (a.norm() + b.norm()).max(1.0))
    };
    let mut drift: f64 = 0.0;
    let mut s = 0.0;
    while s < 1.0 {
        s = stepper.step(&mut rhs, s, &mut y, 1.0)?;
        let (err, scale) = wronskian(&y);
        drift = drift.max(err / scale);
    }
    Ok(Fundamental {
        xi: C::new(y[0], y[1]),
        xi_prime: C::new(y[2], y[3]),
        eta: C::new(y[4], y[5]),
        eta_prime: C::new(y[6], y[7]),
        wronskian_drift: drift,
    })
}

/// `f` at one complex arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FSample {
    pub z: C,
    /// `diag(f_normal, z)`.
    pub f: [[C; 2]; 2],
    /// Smallest eigenvalue of `Im f`.
    pub im_min_eig: f64,
}

impl FSample {
    pub fn normal(&self) -> C {
        self.f[0][0]
    }
}

const POLE_TOL: f64 = 1e-10;

fn sample_from(z: C, fun: &Fundamental) -> Result<FSample> {
    if fun.xi.norm() < POLE_TOL * fun.eta.norm().max(1.0) {
        return Err(GeoflowError::PoleEncountered { re: z.re, im: z.im });
    }
    let fnormal = fun.eta / fun.xi;
    let zero = C::new(0.0, 0.0);
    Ok(FSample {
        z,
        f: [[fnormal, zero], [zero, z]],
        im_min_eig: fnormal.im.min(z.im),
    })
}

pub fn f_matrix(profile: &CurvatureProfile, z: C) -> Result<FSample> {
    sample_from(z, &fundamental_solutions(profile, z)?)
}

/// `φ` at one real arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSample {
    pub sigma: f64,
    /// `diag(φ_normal, σ)`; absent where `ξ` vanishes.
    pub phi: Option<[[f64; 2]; 2]>,
    pub xi: f64,
    pub eta: f64,
    pub singular: bool,
}

fn check_unit(metric: &SurfaceMetric, theta: &PhasePoint) -> Result<()> {
    let s = theta.speed_sq(metric);
    if (s - 1.0).abs() > 1e-9 {
        return Err(GeoflowError::NotUnitSpeed { speed_sq: s });
    }
    Ok(())
}

/// `φ` along the geodesic through `theta` at the arc lengths in `sigmas`
/// (any order, either sign).
pub fn phi_along_geodesic(metric: &SurfaceMetric, theta: &PhasePoint, sigmas: &[f64]) -> Result<Vec<PhiSample>> {
    check_unit(metric, theta)?;
    if sigmas.iter().any(|s| !s.is_finite()) {
        return Err(GeoflowError::InvalidInput("σ values must be finite".into()));
    }
    let settings = FlowSettings::with_tol(1e-12);
    let mut out: Vec<Option<PhiSample>> = vec![None; sigmas.len()];
    for (start, sign) in [(*theta, 1.0), (theta.reversed(), -1.0)] {
        let mut idx: Vec<usize> = (0..sigmas.len())
            .filter(|&i| if sign > 0.0 { sigmas[i] >= 0.0 } else { sigmas[i] < 0.0 })
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.sort_by(|&a, &b| (sign * sigmas[a]).partial_cmp(&(sign * sigmas[b])).unwrap());
        let times: Vec<f64> = idx.iter().map(|&i| sign * sigmas[i]).collect();
        let prop = propagate(
            metric,
            &start,
            times[times.len() - 1],
            &[[1.0, 0.0], [0.0, 1.0]],
            settings,
            Record::At(&times),
        )?;
        for (&i, s) in idx.iter().zip(&prop.samples) {
            let xi = s.normals[0][0];
            // running backwards flips the sign of η
            let eta = sign * s.normals[1][0];
            let singular = xi.abs() < 1e-9 * eta.abs().max(1.0);
            out[i] = Some(PhiSample {
                sigma: sigmas[i],
                phi: (!singular).then(|| [[eta / xi, 0.0], [0.0, sigmas[i]]]),
                xi,
                eta,
                singular,
            });
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every σ assigned")).collect())
}

/// Rectangular grid over `σ + iτ` with `τ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeroGrid {
    pub sigma_range: (f64, f64),
    pub tau_max: f64,
    pub n_sigma: usize,
    pub n_tau: usize,
}

impl MeroGrid {
    pub fn new(sigma_range: (f64, f64), tau_max: f64, n: usize) -> Self {
        Self {
            sigma_range,
            tau_max,
            n_sigma: n,
            n_tau: n,
        }
    }

    pub fn points(&self) -> Vec<C> {
        let (a, b) = self.sigma_range;
        let mut pts = Vec::with_capacity(self.n_sigma * self.n_tau);
        for j in 1..=self.n_tau {
            let tau = self.tau_max * j as f64 / self.n_tau as f64;
            for k in 0..self.n_sigma {
                let sigma = if self.n_sigma == 1 {
                    0.5 * (a + b)
                } else {
                    a + (b - a) * k as f64 / (self.n_sigma - 1) as f64
                };
                pts.push(C::new(sigma, tau));
            }
        }
        pts
    }
}

/// Outcome of one property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub pass: bool,
    /// Worst error, or for positivity the smallest eigenvalue seen.
    pub worst: f64,
}

/// `e = (Im f(i))⁻¹` and `Re f(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureAtI {
    pub e: [[f64; 2]; 2],
    pub re_f: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeroReport {
    pub profile: CurvatureProfile,
    pub strip_half_width: f64,
    pub grid: MeroGrid,
    pub f_at_zero: PropertyCheck,
    pub derivative_at_zero: PropertyCheck,
    pub symmetric: PropertyCheck,
    pub schwarz_reflection: PropertyCheck,
    pub wronskian: PropertyCheck,
    pub positive_definite: PropertyCheck,
    /// Grid points where `Im f` was not positive definite.
    pub failures: usize,
    pub poles: usize,
    /// Grid points outside the validity strip.
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_at_i: Option<StructureAtI>,
    pub pass: bool,
}

impl MeroReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

const CHECK_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;

/// Checks `f(0) = 0`, `f'(0) = Id`, symmetry, conjugate symmetry and
/// positive definiteness of `Im f` on the grid.
pub fn verify_theorem_mero(profile: &CurvatureProfile, grid: MeroGrid) -> Result<MeroReport> {
    if grid.n_sigma == 0 || grid.n_tau == 0 || !(grid.tau_max > 0.0) {
        return Err(GeoflowError::InvalidInput("grid needs points and τ-max > 0".into()));
    }
    let f0 = f_matrix(profile, C::new(0.0, 0.0))?;
    let f0_err = f0.f.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    let fp = f_matrix(profile, C::new(FD_STEP, 0.0))?;
    let fm = f_matrix(profile, C::new(-FD_STEP, 0.0))?;
    let mut d_err: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let d = (fp.f[r][c] - fm.f[r][c]) / (2.0 * FD_STEP);
            let want = if r == c { 1.0 } else { 0.0 };
            d_err = d_err.max((d - want).norm());
        }
    }

    enum Outcome {
        Sample(FSample, f64, f64),
        Pole,
        Outside,
    }
    let outcomes: Vec<Outcome> = grid
        .points()
        .par_iter()
        .map(|&z| {
            let fz = fundamental_solutions(profile, z);
            let fc = fundamental_solutions(profile, z.conj());
            match (fz, fc) {
                (Ok(a), Ok(b)) => match (sample_from(z, &a), sample_from(z.conj(), &b)) {
                    (Ok(s), Ok(t)) => {
                        let refl = (t.normal() - s.normal().conj()).norm() / s.normal().norm().max(1.0);
                        Outcome::Sample(s, refl, a.wronskian_drift.max(b.wronskian_drift))
                    }
                    _ => Outcome::Pole,
                },
                (Err(GeoflowError::OutsideValidityStrip { .. }), _)
                | (_, Err(GeoflowError::OutsideValidityStrip { .. })) => Outcome::Outside,
                (Err(e), _) | (_, Err(e)) => panic!("integration failed on the grid: {e}"),
            }
        })
        .collect();
    let mut sym: f64 = 0.0;
    let mut refl: f64 = 0.0;
    let mut wr: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let (mut failures, mut poles, mut skipped) = (0, 0, 0);
    for o in &outcomes {
        match o {
            Outcome::Sample(s, r, w) => {
                sym = sym.max((s.f[0][1] - s.f[1][0]).norm());
                refl = refl.max(*r);
                wr = wr.max(*w);
                min_eig = min_eig.min(s.im_min_eig);
                if !(s.im_min_eig > 0.0) {
                    failures += 1;
                }
            }
            Outcome::Pole => {
                poles += 1;
                failures += 1;
            }
            Outcome::Outside => skipped += 1,
        }
    }
    if poles > 0 {
        min_eig = f64::NEG_INFINITY;
    }
    let structure_at_i = f_matrix(profile, C::new(0.0, 1.0)).ok().and_then(|s| {
        let im = s.f[0][0].im;
        (im != 0.0).then(|| StructureAtI {
            e: [[1.0 / im, 0.0], [0.0, 1.0]],
            re_f: [[s.f[0][0].re, 0.0], [0.0, 0.0]],
        })
    });
    let check = |pass: bool, worst: f64| PropertyCheck { pass, worst };
    let f_at_zero = check(f0_err < CHECK_TOL, f0_err);
    let derivative_at_zero = check(d_err < CHECK_TOL, d_err);
    let symmetric = check(sym == 0.0, sym);
    let schwarz_reflection = check(refl < 1e-10, refl);
    let wronskian = check(wr < 1e-8, wr);
    let positive_definite = check(failures == 0 && skipped < outcomes.len(), min_eig);
    let pass = f_at_zero.pass
        && derivative_at_zero.pass
        && symmetric.pass
        && schwarz_reflection.pass
        && wronskian.pass
        && positive_definite.pass;
    Ok(MeroReport {
        profile: profile.clone(),
        strip_half_width: profile.strip_half_width(),
        grid,
        f_at_zero,
        derivative_at_zero,
        symmetric,
        schwarz_reflection,
        wronskian,
        positive_definite,
        failures,
        poles,
        skipped,
        structure_at_i,
        pass,
    })
}

/// `f` on every grid point, skipping poles and points outside the strip.
pub fn f_grid(profile: &CurvatureProfile, grid: MeroGrid) -> Vec<FSample> {
    grid.points()
        .par_iter()
        .filter_map(|&z| f_matrix(profile, z).ok())
        .collect()
}

/// CSV with columns `sigma,tau,re_f,im_f,min_eig` (normal entry of `f`).
pub fn write_fsample_csv<W: Write>(samples: &[FSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GeoflowError::InvalidInput(format!("csv: {e}"));
    w.write_record(["sigma", "tau", "re_f", "im_f", "min_eig"])
        .map_err(io)?;
    for s in samples {
        let f = s.normal();
        w.write_record([
            s.z.re.to_string(),
            s.z.im.to_string(),
            f.re.to_string(),
            f.im.to_string(),
            s.im_min_eig.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| GeoflowError::InvalidInput(format!("csv: {e}")))
}

/// Radius of the tube along one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TubeRadius {
    /// `Im f` first loses positive definiteness at this `τ`.
    Radius { tau: f64 },
    /// No loss up to `τ-max`.
    AtLeast { tau_max: f64 },
}

impl std::fmt::Display for TubeRadius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TubeRadius::Radius { tau } => write!(f, "{tau:.6}"),
            TubeRadius::AtLeast { tau_max } => write!(f, "≥ {tau_max}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeProbe {
    pub radius: TubeRadius,
    pub sigma_samples: usize,
    /// Real-axis poles of `f` near which σ-samples were dropped.
    pub excluded_poles: Vec<f64>,
    pub strip_half_width: f64,
}

const POLE_GUARD: f64 = 1e-3;
const BISECTION_TOL: f64 = 1e-7;

/// Probes with 64 σ-samples over `[-π, π]`, or over the fitted range for
/// Chebyshev profiles.
pub fn tube_radius_probe(profile: &CurvatureProfile, tau_max: f64, tau_steps: usize) -> Result<TubeProbe> {
    let (a, b) = profile.real_range();
    let range = if a.is_finite() { (a, b) } else { (-PI, PI) };
    let sigmas: Vec<f64> = (0..64)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / 63.0)
        .collect();
    tube_radius_probe_with(profile, tau_max, tau_steps, &sigmas)
}

/// Scans `τ` upwards in `tau_steps` steps for the first `τ` where the
/// smallest eigenvalue of `Im f(σ + iτ)` over the σ-samples is `≤ 0` (or
/// a pole is hit), then bisects.
pub fn tube_radius_probe_with(
    profile: &CurvatureProfile,
    tau_max: f64,
    tau_steps: usize,
    sigmas: &[f64],
) -> Result<TubeProbe> {
    if !(tau_max > 0.0) || tau_steps == 0 || sigmas.is_empty() {
        return Err(GeoflowError::InvalidInput(
            "τ-max > 0, τ-steps ≥ 1 and σ-samples required".into(),
        ));
    }
    if tau_max > profile.strip_half_width()
        || (tau_max == profile.strip_half_width() && !profile.contains(C::new(0.0, tau_max)))
    {
        return Err(GeoflowError::OutsideValidityStrip { re: 0.0, im: tau_max });
    }
    let poles = real_poles(profile, sigmas)?;
    let kept: Vec<f64> = sigmas
        .iter()
        .cloned()
        .filter(|s| poles.iter().all(|p| (s - p).abs() >= POLE_GUARD))
        .collect();
    if kept.is_empty() {
        return Err(GeoflowError::InvalidInput(
            "every σ-sample lies in a pole guard band".into(),
        ));
    }
    let degenerate = |tau: f64| -> Result<bool> {
        let mins: Vec<Result<f64>> = kept
            .par_iter()
            .map(|&s| match f_matrix(profile, C::new(s, tau)) {
                Ok(f) => Ok(f.im_min_eig),
                Err(GeoflowError::PoleEncountered { .. }) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e),
            })
            .collect();
        let mut m = f64::INFINITY;
        for v in mins {
            m = m.min(v?);
        }
        Ok(!(m > 0.0))
    };
    let mut lo = 0.0;
    for j in 1..=tau_steps {
        let hi = tau_max * j as f64 / tau_steps as f64;
        if degenerate(hi)? {
            let mut hi = hi;
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if degenerate(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(TubeProbe {
                radius: TubeRadius::Radius { tau: 0.5 * (lo + hi) },
                sigma_samples: kept.len(),
                excluded_poles: poles,
                strip_half_width: profile.strip_half_width(),
            });
        }
        lo = hi;
    }
    Ok(TubeProbe {
        radius: TubeRadius::AtLeast { tau_max },
        sigma_samples: kept.len(),
        excluded_poles: poles,
        strip_half_width: profile.strip_half_width(),
    })
}

/// Zeros of the real solution `ξ` between the smallest and largest σ.
fn real_poles(profile: &CurvatureProfile, sigmas: &[f64]) -> Result<Vec<f64>> {
    let lo = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let xi = |s: f64| fundamental_solutions(profile, C::new(s, 0.0)).map(|f| f.xi.re);
    let n = 400;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.par_iter().map(|&s| xi(s)).collect::<Result<_>>()?;
    let mut poles = Vec::new();
    for k in 0..n {
        if vals[k] == 0.0 {
            poles.push(grid[k]);
        } else if vals[k] * vals[k + 1] < 0.0 {
            let (mut a, mut b, mut fa) = (grid[k], grid[k + 1], vals[k]);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let fm = xi(m)?;
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            poles.push(0.5 * (a + b));
        }
    }
    Ok(poles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tan_at_i() {
        let s = f_matrix(&CurvatureProfile::constant(1.0), C::new(0.0, 1.0)).unwrap();
        assert!((s.normal() - C::new(0.0, 1f64.tanh())).norm() < 1e-10);
        assert_eq!(s.f[1][1], C::new(0.0, 1.0));
    }

    #[test]
    fn constant_profiles_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let z = C::new(rng.gen_range(-1.2..1.2), rng.gen_range(0.1..1.2));
            let t = f_matrix(&CurvatureProfile::constant(1.0), z).unwrap().normal();
            let h = f_matrix(&CurvatureProfile::constant(-1.0), z).unwrap().normal();
            let f = f_matrix(&CurvatureProfile::constant(0.0), z).unwrap().normal();
            assert!((t - z.tan()).norm() < 1e-9 * z.tan().norm().max(1.0));
            assert!((h - z.tanh()).norm() < 1e-9 * z.tanh().norm().max(1.0));
            assert!((f - z).norm() < 1e-12);
        }
    }

    #[test]
    fn schwarz_reflection_and_wronskian() {
        let profiles = [
            CurvatureProfile::constant(1.0),
            CurvatureProfile::ClosedForm {
                form: NamedProfile::Trigonometric {
                    mean: 0.5,
                    amplitude: 0.3,
                    frequency: 2.0,
                },
            },
            CurvatureProfile::ClosedForm {
                form: NamedProfile::SechSquared { depth: 1.0, width: 2.0 },
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in &profiles {
            for _ in 0..100 {
                let z = C::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let a = fundamental_solutions(p, z).unwrap();
                let b = fundamental_solutions(p, z.conj()).unwrap();
                assert!((a.eta / a.xi - (b.eta / b.xi).conj()).norm() < 1e-10 * (a.eta / a.xi).norm().max(1.0));
                assert!(a.wronskian_drift < 1e-8, "{}", a.wronskian_drift);
            }
        }
    }

    #[test]
    fn chebyshev_fit_reproduces_entire_function() {
        let p = CurvatureProfile::chebyshev_fit(|s| 1.0 + 0.2 * s.cos(), -4.0, 4.0, 32).unwrap();
        assert_eq!(p.strip_half_width(), 2.0);
        for (z, tol) in [
            (C::new(0.5, 0.7), 1e-12),
            (C::new(2.0, -1.0), 1e-10),
            (C::new(-3.0, 1.9), 1e-6),
        ] {
            let want = 1.0 + 0.2 * z.cos();
            assert!((p.eval(z) - want).norm() < tol, "{z}");
        }
        assert!(matches!(
            f_matrix(&p, C::new(0.0, 2.5)),
            Err(GeoflowError::OutsideValidityStrip { .. })
        ));
        assert!(matches!(
            f_matrix(&p, C::new(4.5, 0.1)),
            Err(GeoflowError::OutsideValidityStrip { .. })
        ));
    }

    #[test]
    fn pole_on_real_axis() {
        let e = f_matrix(&CurvatureProfile::constant(1.0), C::new(PI / 2.0, 0.0)).unwrap_err();
        assert_eq!(e.kind(), "pole-encountered");
    }

    #[test]
    fn negative_curvature_radius() {
        let p = tube_radius_probe(&CurvatureProfile::constant(-1.0), 2.0, 20).unwrap();
        match p.radius {
            TubeRadius::Radius { tau } => assert!((tau - PI / 2.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        let q = tube_radius_probe(&CurvatureProfile::constant(0.0), 10.0, 20).unwrap();
        assert_eq!(q.radius, TubeRadius::AtLeast { tau_max: 10.0 });
        assert_eq!(q.radius.to_string(), "≥ 10");
    }

    #[test]
    fn real_poles_of_the_round_profile() {
        let p = tube_radius_probe(&CurvatureProfile::constant(1.0), 1.0, 4).unwrap();
        assert_eq!(p.excluded_poles.len(), 2);
        assert!(p.excluded_poles.iter().all(|x| (x.abs() - PI / 2.0).abs() < 1e-9));
    }

    #[test]
    fn fsample_csv_header() {
        let s = f_grid(&CurvatureProfile::constant(0.0), MeroGrid::new((-1.0, 1.0), 1.0, 2));
        let mut buf = Vec::new();
        write_fsample_csv(&s, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(r.headers().unwrap(), vec!["sigma", "tau", "re_f", "im_f", "min_eig"]);
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 4);
        for row in rows {
            assert!((row[0] - row[2]).abs() < 1e-12 && (row[1] - row[3]).abs() < 1e-12);
        }
    }
}
