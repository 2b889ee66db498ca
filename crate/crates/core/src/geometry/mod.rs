//! Analytic surface metrics: evaluation of the metric tensor, Christoffel
//! symbols and Gaussian curvature in charts.
//!
//! Built-in surfaces:
//!
//! * round sphere and ellipsoid, embedded in R^3 through two stereographic
//!   charts (see [`embedded`]);
//! * Paternain deformation of the ellipsoid, `c(X) g_E` with the scalar
//!   factor `c = (1 - eps r.X) / (a1 a2 a3 sum X_i^2 / a_i^2)`;
//! * flat torus `R^2 / B Z^2` in fractional coordinates;
//! * custom metrics from a named registry, differentiated numerically.

pub mod custom;
pub mod embedded;
mod spec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use custom::CustomMetric;
pub use embedded::{Mat3, Vec3};
pub use spec::{MetricRegistry, MetricSpec, DEFAULT_ELLIPSOID_AXES, DEFAULT_PATERNAIN_DIRECTION};

use crate::error::{GeoflowError, Result};
use crate::quadrature::gauss_legendre;
use embedded::{DOMAIN_RADIUS, IDENTITY3, SWITCH_RADIUS};

pub type Mat2 = [[f64; 2]; 2];
/// `gamma[k][i][j]` = Γ^k_{ij}.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// A point of the surface in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub chart: usize,
    pub coords: [f64; 2],
}

impl SurfacePoint {
    pub fn new(chart: usize, u: f64, v: f64) -> Self {
        Self { chart, coords: [u, v] }
    }
}

#[derive(Debug, Clone)]
pub enum MetricKind {
    RoundSphere {
        radius: f64,
    },
    /// Columns of `basis` are the lattice generators.
    FlatTorus {
        basis: Mat2,
    },
    Ellipsoid {
        a: Vec3,
    },
    Paternain {
        a: Vec3,
        eps: f64,
        r: Vec3,
    },
    Custom(CustomMetric),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    IntrinsicChart,
    EmbeddedInR3,
}

/// Parameter-space domain of one chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartDomain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Additional radial restriction `|u| <= radius` (stereographic charts).
    pub radius: Option<f64>,
    pub periodic: [bool; 2],
}

/// Metric, inverse, connection and curvature at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalGeometry {
    pub g: Mat2,
    pub ginv: Mat2,
    pub gamma: Christoffel,
    pub curvature: f64,
}

#[derive(Debug, Clone)]
struct VolumeData {
    area: f64,
    /// Cumulative area fraction of the primary region of each chart.
    chart_cdf: Vec<f64>,
    density_bound: Vec<f64>,
}

/// An analytic Riemannian metric on a closed surface with its chart atlas.
#[derive(Debug, Clone)]
pub struct SurfaceMetric {
    kind: MetricKind,
    rotation: Mat3,
    spec: Option<MetricSpec>,
    volume: VolumeData,
}

impl SurfaceMetric {
    pub fn round_sphere(radius: f64) -> Result<Self> {
        Self::build(MetricKind::RoundSphere { radius }, IDENTITY3)
    }

    pub fn flat_torus(basis: Mat2) -> Result<Self> {
        Self::build(MetricKind::FlatTorus { basis }, IDENTITY3)
    }

    pub fn unit_torus() -> Self {
        Self::flat_torus([[1.0, 0.0], [0.0, 1.0]]).expect("identity lattice")
    }

    pub fn unit_sphere() -> Self {
        Self::round_sphere(1.0).expect("unit radius")
    }

    pub fn ellipsoid(a: Vec3) -> Result<Self> {
        Self::build(MetricKind::Ellipsoid { a }, IDENTITY3)
    }

    pub fn paternain(a: Vec3, eps: f64, r: Vec3) -> Result<Self> {
        Self::build(MetricKind::Paternain { a, eps, r }, IDENTITY3)
    }

    pub fn custom(metric: CustomMetric) -> Result<Self> {
        Self::build(MetricKind::Custom(metric), IDENTITY3)
    }

    /// Same surface with the stereographic atlas rotated by `rotation`.
    /// Only meaningful for embedded surfaces; other kinds ignore it.
    pub fn with_atlas_rotation(&self, rotation: Mat3) -> Result<Self> {
        if !embedded::is_rotation(&rotation) {
            return Err(GeoflowError::InvalidMetric(
                "atlas rotation is not a rotation matrix".into(),
            ));
        }
        let mut out = Self::build(self.kind.clone(), rotation)?;
        out.spec = self.spec.clone();
        Ok(out)
    }

    pub(crate) fn with_spec(mut self, spec: MetricSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    fn build(kind: MetricKind, rotation: Mat3) -> Result<Self> {
        validate_kind(&kind)?;
        let mut metric = Self {
            kind,
            rotation,
            spec: None,
            volume: VolumeData {
                area: 0.0,
                chart_cdf: Vec::new(),
                density_bound: Vec::new(),
            },
        };
        if let MetricKind::Custom(c) = &metric.kind {
            check_custom_spd(c)?;
        }
        metric.volume = metric.compute_volume();
        Ok(metric)
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn spec(&self) -> Option<&MetricSpec> {
        self.spec.as_ref()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MetricKind::RoundSphere { .. } => "round-sphere",
            MetricKind::FlatTorus { .. } => "flat-torus",
            MetricKind::Ellipsoid { .. } => "ellipsoid",
            MetricKind::Paternain { .. } => "paternain",
            MetricKind::Custom(_) => "custom",
        }
    }

    pub fn representation(&self) -> Representation {
        if self.is_embedded() {
            Representation::EmbeddedInR3
        } else {
            Representation::IntrinsicChart
        }
    }

    pub fn is_embedded(&self) -> bool {
        matches!(
            self.kind,
            MetricKind::RoundSphere { .. } | MetricKind::Ellipsoid { .. } | MetricKind::Paternain { .. }
        )
    }

    /// Semi-axes of the embedded surface.
    fn axes(&self) -> Vec3 {
        match &self.kind {
            MetricKind::RoundSphere { radius } => [*radius; 3],
            MetricKind::Ellipsoid { a } | MetricKind::Paternain { a, .. } => [a[0].sqrt(), a[1].sqrt(), a[2].sqrt()],
            _ => [0.0; 3],
        }
    }

    pub fn charts(&self) -> Vec<ChartDomain> {
        match &self.kind {
            MetricKind::FlatTorus { .. } => vec![ChartDomain {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
                radius: None,
                periodic: [true, true],
            }],
            MetricKind::Custom(c) => vec![ChartDomain {
                lo: c.lo,
                hi: c.hi,
                radius: None,
                periodic: c.periodic,
            }],
            _ => vec![
                ChartDomain {
                    lo: [-DOMAIN_RADIUS; 2],
                    hi: [DOMAIN_RADIUS; 2],
                    radius: Some(DOMAIN_RADIUS),
                    periodic: [false, false],
                };
                2
            ],
        }
    }

    pub fn num_charts(&self) -> usize {
        if self.is_embedded() {
            2
        } else {
            1
        }
    }

    /// Characteristic length of the surface (half the length of a
    /// shortest closed geodesic for the symmetric built-ins).
    pub fn length_scale(&self) -> f64 {
        match &self.kind {
            MetricKind::RoundSphere { radius } => std::f64::consts::PI * radius,
            MetricKind::Ellipsoid { a } | MetricKind::Paternain { a, .. } => std::f64::consts::PI * a[2].sqrt(),
            MetricKind::FlatTorus { basis } => {
                let l1 = (basis[0][0].powi(2) + basis[1][0].powi(2)).sqrt();
                let l2 = (basis[0][1].powi(2) + basis[1][1].powi(2)).sqrt();
                l1.max(l2)
            }
            MetricKind::Custom(c) => c.diameter(),
        }
    }

    pub fn in_domain(&self, p: &SurfacePoint) -> bool {
        if p.chart >= self.num_charts() || !p.coords.iter().all(|c| c.is_finite()) {
            return false;
        }
        match &self.kind {
            MetricKind::FlatTorus { .. } => true,
            MetricKind::Custom(c) => {
                (0..2).all(|i| c.periodic[i] || (p.coords[i] >= c.lo[i] && p.coords[i] <= c.hi[i]))
            }
            _ => p.coords[0].hypot(p.coords[1]) <= DOMAIN_RADIUS,
        }
    }

    fn check_domain(&self, p: &SurfacePoint) -> Result<()> {
        if self.in_domain(p) {
            Ok(())
        } else {
            Err(GeoflowError::PointOutsideChart {
                chart: p.chart,
                u: p.coords[0],
                v: p.coords[1],
            })
        }
    }

    /// Metric coefficients without domain or definiteness checks.
    pub(crate) fn metric_raw(&self, p: &SurfacePoint) -> Mat2 {
        match &self.kind {
            MetricKind::FlatTorus { basis } => torus_gram(basis),
            MetricKind::Custom(c) => c.metric(p.coords),
            _ => self.local_raw(p, false).g,
        }
    }

    /// Full local geometry without domain checks. `with_curvature = false`
    /// skips the curvature for custom metrics (it is expensive there).
    pub(crate) fn local_raw(&self, p: &SurfacePoint, with_curvature: bool) -> LocalGeometry {
        match &self.kind {
            MetricKind::FlatTorus { basis } => {
                let g = torus_gram(basis);
                LocalGeometry {
                    g,
                    ginv: inverse2(&g),
                    gamma: [[[0.0; 2]; 2]; 2],
                    curvature: 0.0,
                }
            }
            MetricKind::Custom(c) => {
                let g = c.metric(p.coords);
                let gamma = c.christoffel_raw(p.coords);
                let curvature = if with_curvature {
                    c.gauss_curvature_raw(p.coords)
                } else {
                    f64::NAN
                };
                LocalGeometry {
                    g,
                    ginv: inverse2(&g),
                    gamma,
                    curvature,
                }
            }
            MetricKind::RoundSphere { .. } | MetricKind::Ellipsoid { .. } => {
                let jet = embedded::ellipsoid_jet(&self.axes(), &self.rotation, p.chart, p.coords);
                let geo = embedded::induced(&jet);
                LocalGeometry {
                    g: geo.g,
                    ginv: geo.ginv,
                    gamma: geo.gamma,
                    curvature: geo.curvature,
                }
            }
            MetricKind::Paternain { a, eps, r } => {
                let jet = embedded::ellipsoid_jet(&self.axes(), &self.rotation, p.chart, p.coords);
                let base = embedded::induced(&jet);
                let factor = embedded::paternain_factor(a, *eps, r, &jet.x);
                let geo = embedded::conformal(&jet, &base, &factor);
                LocalGeometry {
                    g: geo.g,
                    ginv: geo.ginv,
                    gamma: geo.gamma,
                    curvature: geo.curvature,
                }
            }
        }
    }

    /// Metric tensor at `p`; symmetric positive definite.
    pub fn metric_eval(&self, p: &SurfacePoint) -> Result<Mat2> {
        self.check_domain(p)?;
        let g = self.metric_raw(p);
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        if !(g[0][0] > 0.0 && det > 0.0) {
            return Err(GeoflowError::NonPositiveDefinite {
                chart: p.chart,
                u: p.coords[0],
                v: p.coords[1],
                e: g[0][0],
                f: g[0][1],
                g: g[1][1],
            });
        }
        Ok(g)
    }

    /// Christoffel symbols of the second kind at `p`.
    pub fn christoffel(&self, p: &SurfacePoint) -> Result<Christoffel> {
        self.metric_eval(p)?;
        match &self.kind {
            MetricKind::Custom(c) => c.christoffel(p.coords),
            _ => Ok(self.local_raw(p, false).gamma),
        }
    }

    /// Gaussian curvature at `p`.
    pub fn gauss_curvature(&self, p: &SurfacePoint) -> Result<f64> {
        self.metric_eval(p)?;
        match &self.kind {
            MetricKind::Custom(c) => c.gauss_curvature(p.coords),
            _ => Ok(self.local_raw(p, true).curvature),
        }
    }

    /// Metric, connection and curvature at once, with domain checks.
    pub fn local_geometry(&self, p: &SurfacePoint) -> Result<LocalGeometry> {
        self.metric_eval(p)?;
        if let MetricKind::Custom(c) = &self.kind {
            let gamma = c.christoffel(p.coords)?;
            let curvature = c.gauss_curvature(p.coords)?;
            let g = c.metric(p.coords);
            return Ok(LocalGeometry {
                g,
                ginv: inverse2(&g),
                gamma,
                curvature,
            });
        }
        Ok(self.local_raw(p, true))
    }

    /// Ambient position for embedded surfaces.
    pub fn ambient(&self, p: &SurfacePoint) -> Option<Vec3> {
        if self.is_embedded() {
            Some(embedded::ellipsoid_jet(&self.axes(), &self.rotation, p.chart, p.coords).x)
        } else {
            None
        }
    }

    /// Ambient position and the push-forward of a chart vector.
    pub fn ambient_vector(&self, p: &SurfacePoint, v: [f64; 2]) -> Option<(Vec3, Vec3)> {
        if !self.is_embedded() {
            return None;
        }
        let jet = embedded::ellipsoid_jet(&self.axes(), &self.rotation, p.chart, p.coords);
        let mut w = [0.0; 3];
        for k in 0..3 {
            w[k] = jet.d[0][k] * v[0] + jet.d[1][k] * v[1];
        }
        Some((jet.x, w))
    }

    /// Chart point for an ambient position on an embedded surface, in the
    /// chart where it sits deepest.
    pub fn point_from_ambient(&self, x: &Vec3) -> Option<SurfacePoint> {
        if !self.is_embedded() {
            return None;
        }
        let axes = self.axes();
        let u0 = embedded::ellipsoid_chart_coords(&axes, &self.rotation, 0, x);
        let u1 = embedded::ellipsoid_chart_coords(&axes, &self.rotation, 1, x);
        let depth = |u: [f64; 2]| {
            let r = u[0].hypot(u[1]);
            if r.is_finite() {
                r
            } else {
                f64::INFINITY
            }
        };
        let (chart, u) = if depth(u0) <= depth(u1) { (0, u0) } else { (1, u1) };
        Some(SurfacePoint { chart, coords: u })
    }

    /// Chart vector for an ambient tangent vector at `p`.
    pub fn vector_from_ambient(&self, p: &SurfacePoint, w: &Vec3) -> Option<[f64; 2]> {
        let jet = embedded::ellipsoid_jet(&self.axes(), &self.rotation, p.chart, p.coords);
        if !self.is_embedded() {
            return None;
        }
        // least squares onto the tangent frame
        let a = [
            [embedded::dot(&jet.d[0], &jet.d[0]), embedded::dot(&jet.d[0], &jet.d[1])],
            [embedded::dot(&jet.d[1], &jet.d[0]), embedded::dot(&jet.d[1], &jet.d[1])],
        ];
        let b = [embedded::dot(&jet.d[0], w), embedded::dot(&jet.d[1], w)];
        Some(mat_vec2(&inverse2(&a), &b))
    }

    /// Locator coordinates in R^4: the ambient point for embedded surfaces,
    /// a product-of-circles embedding for periodic charts. Euclidean
    /// distance in this space is comparable to geodesic distance locally.
    pub fn key(&self, p: &SurfacePoint) -> [f64; 4] {
        match &self.kind {
            MetricKind::FlatTorus { basis } => {
                let tau = 2.0 * std::f64::consts::PI;
                let l1 = (basis[0][0].powi(2) + basis[1][0].powi(2)).sqrt() / tau;
                let l2 = (basis[0][1].powi(2) + basis[1][1].powi(2)).sqrt() / tau;
                let (a, b) = (tau * p.coords[0], tau * p.coords[1]);
                [l1 * a.cos(), l1 * a.sin(), l2 * b.cos(), l2 * b.sin()]
            }
            MetricKind::Custom(c) => {
                let mut out = [0.0; 4];
                for i in 0..2 {
                    if c.periodic[i] {
                        let period = c.hi[i] - c.lo[i];
                        let scale = period / (2.0 * std::f64::consts::PI);
                        let ang = (p.coords[i] - c.lo[i]) / scale;
                        out[2 * i] = scale * ang.cos();
                        out[2 * i + 1] = scale * ang.sin();
                    } else {
                        out[2 * i] = p.coords[i];
                    }
                }
                out
            }
            _ => {
                let x = self.ambient(p).expect("embedded");
                [x[0], x[1], x[2], 0.0]
            }
        }
    }

    /// Locator for a tangent vector `v` at `p`, paired with [`Self::key`] to
    /// measure distances on the tangent bundle. Embedded surfaces use the
    /// ambient vector. Intrinsic metrics use the components of `v` in the
    /// orthonormal frame aligned with the first coordinate axis; the
    /// tangent vectors of the product-of-circles embedding would turn much
    /// faster than the base point moves on small periods.
    pub fn key_velocity(&self, p: &SurfacePoint, v: [f64; 2]) -> [f64; 4] {
        match &self.kind {
            MetricKind::FlatTorus { .. } | MetricKind::Custom(_) => {
                let g = self.metric_raw(p);
                let e1 = [1.0 / g[0][0].sqrt(), 0.0];
                let e2 = unit_normal_with(&g, e1);
                [quad(&g, &v, &e1), quad(&g, &v, &e2), 0.0, 0.0]
            }
            _ => {
                let (_, w) = self.ambient_vector(p, v).expect("embedded");
                [w[0], w[1], w[2], 0.0]
            }
        }
    }

    /// Coordinates of `p` in chart `chart`, if it lies in that chart's domain.
    pub fn to_chart(&self, p: &SurfacePoint, chart: usize) -> Option<SurfacePoint> {
        if chart == p.chart {
            return Some(*p);
        }
        if !self.is_embedded() || chart > 1 {
            return None;
        }
        let w = embedded::transition(p.coords);
        let q = SurfacePoint { chart, coords: w };
        if self.in_domain(&q) {
            Some(q)
        } else {
            None
        }
    }

    /// Moves a tangent vector from chart `p.chart` to `q.chart` (the same
    /// surface point expressed in another chart).
    pub fn transport_vector(&self, p: &SurfacePoint, q: &SurfacePoint, v: [f64; 2]) -> [f64; 2] {
        if p.chart == q.chart {
            v
        } else {
            mat_vec2(&embedded::transition_jacobian(p.coords), &v)
        }
    }

    /// Chart displacement from `from` to `to` expressed in `from`'s chart
    /// (minimum image for periodic coordinates).
    pub fn displacement(&self, from: &SurfacePoint, to: &SurfacePoint) -> Option<[f64; 2]> {
        match &self.kind {
            MetricKind::FlatTorus { .. } => {
                let mut d = [0.0; 2];
                for i in 0..2 {
                    let x = to.coords[i] - from.coords[i];
                    d[i] = x - x.round();
                }
                Some(d)
            }
            MetricKind::Custom(c) => {
                let mut d = [0.0; 2];
                for i in 0..2 {
                    let x = to.coords[i] - from.coords[i];
                    d[i] = if c.periodic[i] {
                        let period = c.hi[i] - c.lo[i];
                        x - period * (x / period).round()
                    } else {
                        x
                    };
                }
                Some(d)
            }
            _ => {
                let q = self.to_chart(to, from.chart)?;
                Some([q.coords[0] - from.coords[0], q.coords[1] - from.coords[1]])
            }
        }
    }

    /// Re-expresses a state that has drifted towards the edge of its chart.
    /// Returns `Ok(None)` when no transition is needed.
    pub fn transit(&self, p: &SurfacePoint, v: [f64; 2]) -> Result<Option<(SurfacePoint, [f64; 2])>> {
        match &self.kind {
            MetricKind::FlatTorus { .. } => {
                if (0..2).all(|i| (0.0..1.0).contains(&p.coords[i])) {
                    return Ok(None);
                }
                let coords = [p.coords[0].rem_euclid(1.0), p.coords[1].rem_euclid(1.0)];
                Ok(Some((SurfacePoint { chart: 0, coords }, v)))
            }
            MetricKind::Custom(c) => {
                let mut coords = p.coords;
                let mut moved = false;
                for i in 0..2 {
                    if coords[i] < c.lo[i] || coords[i] >= c.hi[i] {
                        if !c.periodic[i] {
                            return Err(GeoflowError::LeftAtlas { t: f64::NAN });
                        }
                        let period = c.hi[i] - c.lo[i];
                        coords[i] = c.lo[i] + (coords[i] - c.lo[i]).rem_euclid(period);
                        moved = true;
                    }
                }
                Ok(moved.then_some((SurfacePoint { chart: 0, coords }, v)))
            }
            _ => {
                if p.coords[0].hypot(p.coords[1]) <= SWITCH_RADIUS {
                    return Ok(None);
                }
                let q = SurfacePoint {
                    chart: 1 - p.chart,
                    coords: embedded::transition(p.coords),
                };
                let w = mat_vec2(&embedded::transition_jacobian(p.coords), &v);
                Ok(Some((q, w)))
            }
        }
    }

    /// Brings a point into canonical form (deepest chart / wrapped coordinates).
    pub fn canonical(&self, p: &SurfacePoint) -> SurfacePoint {
        match self.transit(p, [0.0, 0.0]) {
            Ok(Some((q, _))) => q,
            _ => *p,
        }
    }

    pub fn norm_sq(&self, p: &SurfacePoint, v: [f64; 2]) -> f64 {
        quad(&self.metric_raw(p), &v, &v)
    }

    /// Unit normal to `v` at `p`, positively oriented: `(v, n)` is an
    /// oriented orthonormal frame once `v` is normalised.
    pub fn unit_normal(&self, p: &SurfacePoint, v: [f64; 2]) -> [f64; 2] {
        let g = self.metric_raw(p);
        unit_normal_with(&g, v)
    }

    /// Total Riemannian area.
    pub fn area(&self) -> f64 {
        self.volume.area
    }

    /// Riemannian volume element `sqrt(det g)`.
    pub fn density(&self, p: &SurfacePoint) -> f64 {
        let g = self.metric_raw(p);
        (g[0][0] * g[1][1] - g[0][1] * g[1][0]).max(0.0).sqrt()
    }

    /// Draws a point from the normalised Riemannian volume by choosing a
    /// chart region by area and rejection sampling against `sqrt(det g)`.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfacePoint {
        let pick: f64 = rng.gen();
        let chart = self
            .volume
            .chart_cdf
            .iter()
            .position(|&c| pick <= c)
            .unwrap_or(self.volume.chart_cdf.len() - 1);
        let bound = self.volume.density_bound[chart];
        loop {
            let p = self.uniform_in_region(rng, chart);
            let accept: f64 = rng.gen::<f64>() * bound;
            if accept <= self.density(&p) {
                return p;
            }
        }
    }

    fn uniform_in_region<R: Rng + ?Sized>(&self, rng: &mut R, chart: usize) -> SurfacePoint {
        let (a, b) = (rng.gen(), rng.gen());
        self.region_point(chart, a, b)
    }

    /// Maps two uniforms in `[0, 1)` to a uniformly distributed point of
    /// the sampling region of `chart` (uniform in coordinate measure).
    fn region_point(&self, chart: usize, a: f64, b: f64) -> SurfacePoint {
        match &self.kind {
            MetricKind::FlatTorus { .. } => SurfacePoint {
                chart: 0,
                coords: [a, b],
            },
            MetricKind::Custom(c) => SurfacePoint {
                chart: 0,
                coords: [c.lo[0] + a * (c.hi[0] - c.lo[0]), c.lo[1] + b * (c.hi[1] - c.lo[1])],
            },
            _ => {
                let r = a.sqrt();
                let phi = b * 2.0 * std::f64::consts::PI;
                SurfacePoint {
                    chart,
                    coords: [r * phi.cos(), r * phi.sin()],
                }
            }
        }
    }

    /// `n` points from the normalised Riemannian volume, each paired with
    /// an extra uniform in `[0, 1)`, drawn by rejection from a randomly
    /// shifted Halton sequence. Lower variance than [`Self::sample_point`]
    /// for smooth integrands; still unbiased over the random shift.
    pub fn quasi_random_sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(SurfacePoint, f64)> {
        const BASES: [u64; 5] = [2, 3, 5, 7, 11];
        let shift: [f64; 5] = std::array::from_fn(|_| rng.gen());
        let charts = self.volume.density_bound.len();
        let bound = self.volume.density_bound.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::with_capacity(n);
        let mut index: u64 = 1;
        while out.len() < n {
            let u: [f64; 5] = std::array::from_fn(|d| (radical_inverse(index, BASES[d]) + shift[d]).fract());
            index += 1;
            let chart = ((u[0] * charts as f64) as usize).min(charts - 1);
            let p = self.region_point(chart, u[1], u[2]);
            if u[3] * bound <= self.density(&p) {
                out.push((p, u[4]));
            }
        }
        out
    }

    fn compute_volume(&self) -> VolumeData {
        match &self.kind {
            MetricKind::FlatTorus { basis } => {
                let det = (basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0]).abs();
                VolumeData {
                    area: det,
                    chart_cdf: vec![1.0],
                    density_bound: vec![det * 1.0000001],
                }
            }
            MetricKind::Custom(c) => {
                let (x, w) = gauss_legendre(64);
                let mut area = 0.0;
                let mut peak: f64 = 0.0;
                let half = [(c.hi[0] - c.lo[0]) / 2.0, (c.hi[1] - c.lo[1]) / 2.0];
                let mid = [(c.hi[0] + c.lo[0]) / 2.0, (c.hi[1] + c.lo[1]) / 2.0];
                for (xi, wi) in x.iter().zip(&w) {
                    for (xj, wj) in x.iter().zip(&w) {
                        let p = SurfacePoint::new(0, mid[0] + half[0] * xi, mid[1] + half[1] * xj);
                        let d = self.density(&p);
                        peak = peak.max(d);
                        area += wi * wj * d * half[0] * half[1];
                    }
                }
                VolumeData {
                    area,
                    chart_cdf: vec![1.0],
                    density_bound: vec![1.1 * peak],
                }
            }
            _ => {
                // primary region of each chart: the unit coordinate disk
                let (x, w) = gauss_legendre(48);
                let n_phi = 128;
                let mut areas = [0.0; 2];
                let mut bounds = [0.0f64; 2];
                for chart in 0..2 {
                    for (xi, wi) in x.iter().zip(&w) {
                        let r = 0.5 * (xi + 1.0);
                        for k in 0..n_phi {
                            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                            let p = SurfacePoint::new(chart, r * phi.cos(), r * phi.sin());
                            let d = self.density(&p);
                            bounds[chart] = bounds[chart].max(d);
                            areas[chart] += 0.5 * wi * r * d * 2.0 * std::f64::consts::PI / n_phi as f64;
                        }
                    }
                }
                let area = areas[0] + areas[1];
                VolumeData {
                    area,
                    chart_cdf: vec![areas[0] / area, 1.0],
                    density_bound: vec![1.1 * bounds[0], 1.1 * bounds[1]],
                }
            }
        }
    }
}

fn torus_gram(basis: &Mat2) -> Mat2 {
    let mut g = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = basis[0][i] * basis[0][j] + basis[1][i] * basis[1][j];
        }
    }
    g
}

fn validate_kind(kind: &MetricKind) -> Result<()> {
    let bad = |m: &str| Err(GeoflowError::InvalidMetric(m.to_string()));
    match kind {
        MetricKind::RoundSphere { radius } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return bad("sphere radius must be positive");
            }
        }
        MetricKind::FlatTorus { basis } => {
            let det = basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0];
            if !(det.abs() > 1e-12 && det.is_finite()) {
                return bad("torus lattice basis is singular");
            }
        }
        MetricKind::Ellipsoid { a } => {
            if !(0.0 < a[0] && a[0] < a[1] && a[1] < a[2] && a[2].is_finite()) {
                return bad("ellipsoid requires 0 < a1 < a2 < a3");
            }
        }
        MetricKind::Paternain { a, eps, r } => {
            if !(0.0 < a[0] && a[0] < a[1] && a[1] < a[2] && a[2].is_finite()) {
                return bad("paternain metric requires 0 < a1 < a2 < a3");
            }
            // max of r.x over the ellipsoid is sqrt(sum a_i r_i^2)
            let reach = (a[0] * r[0] * r[0] + a[1] * r[1] * r[1] + a[2] * r[2] * r[2]).sqrt();
            if !(eps.abs() * reach < 1.0) {
                return bad("paternain conformal factor is not positive: need |eps| * sqrt(sum a_i r_i^2) < 1");
            }
        }
        MetricKind::Custom(c) => {
            if !(c.lo[0] < c.hi[0] && c.lo[1] < c.hi[1]) {
                return bad("custom chart rectangle is empty");
            }
        }
    }
    Ok(())
}

fn check_custom_spd(c: &CustomMetric) -> Result<()> {
    let n = 16;
    for i in 0..=n {
        for j in 0..=n {
            let u = c.lo[0] + (c.hi[0] - c.lo[0]) * i as f64 / n as f64;
            let v = c.lo[1] + (c.hi[1] - c.lo[1]) * j as f64 / n as f64;
            let [e, f, g] = (c.coefficients)(u, v);
            if !(e > 0.0 && e * g - f * f > 0.0) {
                return Err(GeoflowError::NonPositiveDefinite {
                    chart: 0,
                    u,
                    v,
                    e,
                    f,
                    g,
                });
            }
        }
    }
    Ok(())
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

pub fn inverse2(m: &Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

pub fn mat_vec2(m: &Mat2, v: &[f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn quad(g: &Mat2, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * (g[0][0] * b[0] + g[0][1] * b[1]) + a[1] * (g[1][0] * b[0] + g[1][1] * b[1])
}

pub fn unit_normal_with(g: &Mat2, v: [f64; 2]) -> [f64; 2] {
    let gv = mat_vec2(g, &v);
    let n = [-gv[1], gv[0]];
    let len = quad(g, &n, &n).sqrt();
    [n[0] / len, n[1] / len]
}
