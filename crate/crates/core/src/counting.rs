//! Counting geodesic arcs between two points by shooting, and the two
//! integrals of the counting function over the second endpoint.
//!
//! A fan of geodesics leaving `x` at equally spaced angles is sampled on a
//! uniform time grid. Each cell `[α_i, α_{i+1}] × [t_k, t_{k+1}]` of the
//! grid is split into two triangles; a triangle whose image (taken linearly
//! in a chart around `y`) contains `y` yields a candidate `(α, t)`, which
//! Newton's method then refines on the endpoint map. The Jacobian of the
//! endpoint map is `[γ', b n]`, where `b` is the normal Jacobi field with
//! `b(0) = 0, b'(0) = 1`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoflowError, Result};
use crate::flow::{orthonormal_frame, propagate, FlowSettings, PhasePoint, Record};
use crate::geometry::{inverse2, mat_vec2, quad, SurfaceMetric, SurfacePoint};
use crate::quadrature::simpson;

const TAU: f64 = 2.0 * PI;
/// Barycentric slack when testing triangle membership.
const SLACK: f64 = 0.3;
/// Smallest spatial-index bin, as a fraction of the surface length scale.
const BINS_PER_SCALE: f64 = 200.0;

/// Parameters of the shooting method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CountSettings {
    /// Number of fan directions; the angular resolution is `2π / directions`.
    pub directions: usize,
    /// Endpoint tolerance; `None` means `1e-6` times the surface length scale.
    pub hit_tol: Option<f64>,
    /// Time spacing of the fan samples.
    pub time_step: f64,
    pub fan_tol: f64,
    pub newton_tol: f64,
    /// Largest integrator step while shooting.
    pub newton_h_max: f64,
    pub max_newton: usize,
}

impl Default for CountSettings {
    fn default() -> Self {
        Self {
            directions: 4096,
            hit_tol: None,
            time_step: 0.05,
            fan_tol: 1e-9,
            newton_tol: 1e-11,
            newton_h_max: 1.0,
            max_newton: 50,
        }
    }
}

impl CountSettings {
    pub fn with_resolution(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || resolution > PI / 8.0 {
            return Err(GeoflowError::InvalidInput(format!(
                "angular resolution must lie in (0, π/8], got {resolution}"
            )));
        }
        Ok(Self {
            directions: (TAU / resolution).round() as usize,
            ..Self::default()
        })
    }

    pub fn resolution(&self) -> f64 {
        TAU / self.directions as f64
    }

    pub fn hit_tol(&self, metric: &SurfaceMetric) -> f64 {
        self.hit_tol.unwrap_or(1e-6 * metric.length_scale())
    }
}

/// One geodesic arc from `x` to `y`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcRecord {
    /// Initial direction, measured in the oriented orthonormal frame at `x`.
    pub angle: f64,
    pub length: f64,
    pub start: PhasePoint,
    pub end: PhasePoint,
    /// Normal Jacobi field `b(length)` with `b(0) = 0, b'(0) = 1`; zero
    /// means `y` is conjugate to `x` along this arc.
    pub jacobi: f64,
}

/// Result of [`count_geodesics`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountResult {
    pub x: SurfacePoint,
    pub y: SurfacePoint,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lengths: Vec<f64>,
    pub count: usize,
    pub degenerate: bool,
    pub includes_trivial: bool,
    pub resolution: f64,
    pub hit_tol: f64,
    #[serde(skip)]
    pub arcs: Vec<ArcRecord>,
}

impl CountResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("count result serialises")
    }
}

/// Cells of the fan grid hashed by the locator-space bins they overlap.
#[derive(Debug, Clone, Default)]
struct CellIndex {
    bin: f64,
    ranges: HashMap<[i32; 4], (u32, u32)>,
    cells: Vec<u32>,
}

impl CellIndex {
    fn bin_of(&self, key: &[f64; 4]) -> [i32; 4] {
        key.map(|k| (k / self.bin).floor() as i32)
    }

    /// Cells whose centre lies in the bin of `key` or a neighbouring bin.
    fn near<'a>(&'a self, key: &[f64; 4]) -> impl Iterator<Item = u32> + 'a {
        let b = self.bin_of(key);
        (0..81).flat_map(move |m: i32| {
            let off = [m % 3 - 1, (m / 3) % 3 - 1, (m / 9) % 3 - 1, m / 27 - 1];
            let bin = std::array::from_fn(|d| b[d] + off[d]);
            let slice: &[u32] = match self.ranges.get(&bin) {
                Some(&(a, e)) => &self.cells[a as usize..e as usize],
                None => &[],
            };
            slice.iter().copied()
        })
    }
}

/// The sampled family of geodesics leaving one point.
#[derive(Debug, Clone)]
pub struct DirectionFan {
    origin: SurfacePoint,
    frame: [[f64; 2]; 2],
    directions: usize,
    dt: f64,
    horizon: f64,
    steps: usize,
    nodes: Vec<SurfacePoint>,
    index: CellIndex,
    settings: CountSettings,
}

/// Outcome of shooting from a fan to one target.
#[derive(Debug, Clone)]
pub struct Shots {
    pub arcs: Vec<ArcRecord>,
    pub includes_trivial: bool,
    pub degenerate: bool,
    /// Two distinct solutions fell inside one fan cell.
    pub ambiguous: bool,
}

impl Shots {
    /// `n_T` for `T` up to the fan horizon.
    pub fn count_up_to(&self, horizon: f64) -> usize {
        let tol = 1e-12 * horizon.max(1.0);
        self.arcs.iter().filter(|a| a.length <= horizon + tol).count() + usize::from(self.includes_trivial)
    }
}

fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl DirectionFan {
    /// Integrates the fan from `x` up to `horizon` (plus one grid cell).
    pub fn build(metric: &SurfaceMetric, x: &SurfacePoint, horizon: f64, settings: CountSettings) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GeoflowError::InvalidInput(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        if settings.directions < 16 {
            return Err(GeoflowError::InvalidInput("fan needs at least 16 directions".into()));
        }
        if !metric.in_domain(x) {
            return Err(GeoflowError::PointOutsideChart {
                chart: x.chart,
                u: x.coords[0],
                v: x.coords[1],
            });
        }
        let origin = metric.canonical(x);
        let frame = orthonormal_frame(metric, &origin);
        let dt = settings.time_step;
        let steps = ((horizon / dt).ceil() as usize) + 1;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let n = settings.directions;
        let flow = FlowSettings {
            tol: settings.fan_tol,
            h_max: dt,
        };
        let rays: Vec<Vec<SurfacePoint>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let start = Self::start_state(&frame, &origin, TAU * i as f64 / n as f64);
                let prop = propagate(metric, &start, times[steps], &[], flow, Record::At(&times))?;
                Ok(prop.samples.into_iter().map(|s| s.point.base).collect())
            })
            .collect::<Result<_>>()?;
        let nodes: Vec<SurfacePoint> = rays.into_iter().flatten().collect();
        let index = Self::index_cells(metric, &nodes, n, steps);
        Ok(Self {
            origin,
            frame,
            directions: n,
            dt,
            horizon,
            steps,
            nodes,
            index,
            settings,
        })
    }

    fn index_cells(metric: &SurfaceMetric, nodes: &[SurfacePoint], n: usize, steps: usize) -> CellIndex {
        let stride = steps + 1;
        let keys: Vec<[f64; 4]> = nodes.par_iter().map(|p| metric.key(p)).collect();
        let cells: Vec<([f64; 4], f64)> = (0..n * steps)
            .into_par_iter()
            .map(|cell| {
                let (i, k) = (cell / steps, cell % steps);
                let j = (i + 1) % n;
                let corners = [i * stride + k, j * stride + k, j * stride + k + 1, i * stride + k + 1];
                let mut lo = [f64::INFINITY; 4];
                let mut hi = [f64::NEG_INFINITY; 4];
                for c in corners {
                    for d in 0..4 {
                        lo[d] = lo[d].min(keys[c][d]);
                        hi[d] = hi[d].max(keys[c][d]);
                    }
                }
                let center = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
                let extent = (0..4).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
                (center, extent)
            })
            .collect();
        // a slack-expanded cell stays within one extent of its centre in
        // every coordinate, so bins at least that wide need only the
        // neighbouring bins at lookup time
        let widest = cells.iter().map(|c| c.1).fold(0.0, f64::max);
        let bin = widest.max(metric.length_scale() / BINS_PER_SCALE) * (1.0 + 1e-9) + 1e-300;
        let mut index = CellIndex {
            bin,
            ..CellIndex::default()
        };
        let mut entries: Vec<([i32; 4], u32)> = cells
            .par_iter()
            .enumerate()
            .map(|(cell, (center, _))| (index.bin_of(center), cell as u32))
            .collect();
        entries.par_sort_unstable();
        let mut start = 0;
        while start < entries.len() {
            let key = entries[start].0;
            let mut end = start;
            while end < entries.len() && entries[end].0 == key {
                end += 1;
            }
            index.ranges.insert(key, (start as u32, end as u32));
            start = end;
        }
        index.cells = entries.into_iter().map(|(_, c)| c).collect();
        index
    }

    pub fn origin(&self) -> &SurfacePoint {
        &self.origin
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn start_state(frame: &[[f64; 2]; 2], origin: &SurfacePoint, angle: f64) -> PhasePoint {
        let (s, c) = angle.sin_cos();
        PhasePoint {
            base: *origin,
            velocity: [c * frame[0][0] + s * frame[1][0], c * frame[0][1] + s * frame[1][1]],
        }
    }

    /// Initial unit vector for direction `angle`.
    pub fn direction(&self, angle: f64) -> PhasePoint {
        Self::start_state(&self.frame, &self.origin, angle)
    }

    fn node(&self, ray: usize, k: usize) -> &SurfacePoint {
        &self.nodes[(ray % self.directions) * (self.steps + 1) + k]
    }

    /// Grid cells whose triangles (with slack) contain `y`; returns `(α, t)` guesses.
    /// With `skip_origin` the first time cell (all rays meet at the origin)
    /// is ignored.
    fn candidates(&self, metric: &SurfaceMetric, y: &SurfacePoint, skip_origin: bool) -> Vec<(f64, f64)> {
        let key = metric.key(y);
        let res = TAU / self.directions as f64;
        let mut out = Vec::new();
        for cell in self.index.near(&key) {
            let (ray, k) = (cell as usize / self.steps, cell as usize % self.steps);
            if skip_origin && k == 0 {
                continue;
            }
            let corners = [(ray, k), (ray + 1, k), (ray + 1, k + 1), (ray, k + 1)];
            let mut local = [[0.0; 2]; 4];
            let mut ok = true;
            for (c, (r, kk)) in corners.iter().enumerate() {
                match metric.displacement(y, self.node(*r, *kk)) {
                    Some(d) => local[c] = d,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let params = corners.map(|(r, kk)| (r as f64 * res, kk as f64 * self.dt));
            for tri in [[0, 1, 2], [0, 2, 3]] {
                if let Some(l) = barycentric_origin(&local[tri[0]], &local[tri[1]], &local[tri[2]]) {
                    if l.iter().all(|&v| v >= -SLACK) {
                        let alpha = (0..3).map(|m| l[m] * params[tri[m]].0).sum::<f64>();
                        let t = (0..3).map(|m| l[m] * params[tri[m]].1).sum::<f64>();
                        out.push((wrap_angle(alpha), t.max(0.0)));
                        break;
                    }
                }
            }
        }
        // seed for targets close to the origin
        if let Some(d) = metric.displacement(&self.origin, y) {
            let g = metric.metric_raw(&self.origin);
            let len = quad(&g, &d, &d).sqrt();
            if len < 4.0 * self.dt && len > 0.0 {
                let c = quad(&g, &d, &self.frame[0]);
                let s = quad(&g, &d, &self.frame[1]);
                out.push((wrap_angle(s.atan2(c)), len));
            }
        }
        // merge guesses produced by overlapping slack regions
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for c in out {
            let dup = merged
                .iter()
                .rev()
                .take_while(|m| c.1 - m.1 < 0.5 * self.dt)
                .any(|m| angle_gap(m.0, c.0) < 0.5 * res);
            if !dup {
                merged.push(c);
            }
        }
        merged
    }

    /// Endpoint and normal Jacobi data of the geodesic with direction `angle` at time `t`.
    fn shoot(&self, metric: &SurfaceMetric, angle: f64, t: f64) -> Result<(PhasePoint, [f64; 2])> {
        let start = self.direction(angle);
        let flow = FlowSettings {
            tol: self.settings.newton_tol,
            h_max: self.settings.newton_h_max,
        };
        let prop = propagate(metric, &start, t, &[[0.0, 1.0]], flow, Record::Nothing)?;
        Ok((prop.end, prop.normals[0]))
    }

    /// Newton iteration on `(α, t) -> γ_α(t) = y`.
    fn refine(&self, metric: &SurfaceMetric, y: &SurfacePoint, guess: (f64, f64), hit_tol: f64) -> Option<ArcRecord> {
        let (mut alpha, mut t) = guess;
        let residual = |alpha: f64, t: f64| -> Option<(f64, [f64; 2], PhasePoint, f64)> {
            let (end, b) = self.shoot(metric, alpha, t).ok()?;
            let r = metric.displacement(&end.base, y)?;
            let g = metric.metric_raw(&end.base);
            Some((quad(&g, &r, &r).sqrt(), r, end, b[0]))
        };
        let (mut err, mut r, mut end, mut b) = residual(alpha, t)?;
        for _ in 0..self.settings.max_newton {
            if err < 1e-3 * hit_tol {
                break;
            }
            let n = metric.unit_normal(&end.base, end.velocity);
            let jac = [[end.velocity[0], b * n[0]], [end.velocity[1], b * n[1]]];
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let step = mat_vec2(&inverse2(&jac), &r);
            let mut scale = 1.0;
            let cap = (step[0].abs() / 0.5).max(step[1].abs() / 0.2);
            if cap > 1.0 {
                scale = 1.0 / cap;
            }
            let mut improved = false;
            for _ in 0..12 {
                let mut nt = t + scale * step[0];
                let mut na = alpha + scale * step[1];
                if nt < 0.0 {
                    nt = -nt;
                    na += PI;
                }
                if let Some(next) = residual(na, nt) {
                    if next.0 < err {
                        alpha = wrap_angle(na);
                        t = nt;
                        (err, r, end, b) = next;
                        improved = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (err < hit_tol).then(|| ArcRecord {
            angle: alpha,
            length: t,
            start: self.direction(alpha),
            end,
            jacobi: b,
        })
    }

    /// All arcs from the fan origin to `y` of length at most the fan horizon.
    pub fn shots(&self, metric: &SurfaceMetric, y: &SurfacePoint) -> Result<Shots> {
        if !metric.in_domain(y) {
            return Err(GeoflowError::PointOutsideChart {
                chart: y.chart,
                u: y.coords[0],
                v: y.coords[1],
            });
        }
        let y = metric.canonical(y);
        let hit_tol = self.settings.hit_tol(metric);
        let res = TAU / self.directions as f64;
        let includes_trivial = metric
            .displacement(&self.origin, &y)
            .map(|d| metric.norm_sq(&self.origin, d).sqrt() < hit_tol)
            .unwrap_or(false);
        let guesses = self.candidates(metric, &y, includes_trivial);
        let mut crowd = 0;
        let mut lo = 0;
        for hi in 0..guesses.len() {
            while guesses[hi].1 - guesses[lo].1 > 2.0 * self.dt {
                lo += 1;
            }
            crowd = crowd.max(hi + 1 - lo);
        }
        if crowd > self.directions / 8 {
            // a continuum of arcs of one length focusing on y
            return Ok(Shots {
                arcs: Vec::new(),
                includes_trivial,
                degenerate: true,
                ambiguous: false,
            });
        }
        let mut arcs: Vec<ArcRecord> = guesses
            .par_iter()
            .filter_map(|g| self.refine(metric, &y, *g, hit_tol))
            .collect();
        let limit = self.horizon * (1.0 + 1e-12);
        arcs.retain(|a| a.length <= limit && !(includes_trivial && a.length < 10.0 * hit_tol));
        arcs.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.angle.total_cmp(&b.angle)));
        let mut unique: Vec<ArcRecord> = Vec::with_capacity(arcs.len());
        let mut ambiguous = false;
        for a in arcs {
            let mut dup = false;
            for u in unique.iter().rev() {
                if a.length - u.length >= self.dt {
                    break;
                }
                let gap = angle_gap(a.angle, u.angle);
                if gap < 0.5 * res && a.length - u.length < hit_tol {
                    dup = true;
                    break;
                }
                if gap < res && a.length - u.length >= hit_tol {
                    continue;
                }
                if gap < res {
                    ambiguous = true;
                }
            }
            if !dup {
                unique.push(a);
            }
        }
        let degenerate = unique.iter().any(|a| a.jacobi.abs() < 1e-7 * a.length.max(1.0));
        Ok(Shots {
            arcs: unique,
            includes_trivial,
            degenerate,
            ambiguous,
        })
    }
}

/// Barycentric coordinates of the origin in the triangle `(a, b, c)`.
fn barycentric_origin(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> Option<[f64; 3]> {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let scale = ((b[0] - a[0]).abs() + (c[0] - a[0]).abs() + (b[1] - a[1]).abs() + (c[1] - a[1]).abs()).powi(2);
    if det.abs() <= 1e-12 * scale || det == 0.0 {
        return None;
    }
    let l1 = ((-a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (-a[1])) / det;
    let l2 = ((b[0] - a[0]) * (-a[1]) - (-a[0]) * (b[1] - a[1])) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Counts the geodesic arcs of length at most `horizon` from `x` to `y`.
/// The zero-length arc is included when `x = y`.
pub fn count_geodesics(
    metric: &SurfaceMetric,
    x: &SurfacePoint,
    y: &SurfacePoint,
    horizon: f64,
    settings: CountSettings,
) -> Result<CountResult> {
    let hit_tol = settings.hit_tol(metric);
    if !(hit_tol > 0.0) {
        return Err(GeoflowError::InvalidInput("hit tolerance must be > 0".into()));
    }
    let fan = DirectionFan::build(metric, x, horizon, settings)?;
    let shots = fan.shots(metric, y)?;
    if shots.ambiguous && !shots.degenerate {
        return Err(GeoflowError::ResolutionTooCoarse(format!(
            "two arcs to the target within one fan cell ({} directions)",
            settings.directions
        )));
    }
    Ok(CountResult {
        x: *x,
        y: *y,
        horizon,
        lengths: shots.arcs.iter().map(|a| a.length).collect(),
        count: shots.count_up_to(horizon),
        degenerate: shots.degenerate,
        includes_trivial: shots.includes_trivial,
        resolution: settings.resolution(),
        hit_tol,
        arcs: shots.arcs,
    })
}

/// Monte Carlo estimate of an integral over the surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralEstimate {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
    /// Samples dropped because the target was degenerate or ambiguous.
    pub dropped: usize,
}

/// Direct counting integral `∫ n_T(x, y) dy` at each horizon of `horizons`,
/// reusing one fan and one set of targets.
pub fn counting_integral_series(
    metric: &SurfaceMetric,
    x: &SurfacePoint,
    horizons: &[f64],
    samples: usize,
    seed: u64,
    settings: CountSettings,
) -> Result<Vec<IntegralEstimate>> {
    if samples == 0 {
        return Err(GeoflowError::InvalidInput("need at least one target sample".into()));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) || horizons.iter().any(|&t| !(t > 0.0)) {
        return Err(GeoflowError::InvalidInput(
            "horizons must be positive and increasing".into(),
        ));
    }
    let t_max = *horizons
        .last()
        .ok_or_else(|| GeoflowError::InvalidInput("empty horizon grid".into()))?;
    let fan = DirectionFan::build(metric, x, t_max, settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = metric.quasi_random_sample(samples, &mut rng);
    let shots: Vec<Shots> = targets
        .par_iter()
        .map(|(y, _)| fan.shots(metric, y))
        .collect::<Result<_>>()?;
    let area = metric.area();
    Ok(horizons
        .iter()
        .map(|&h| {
            let counts: Vec<f64> = shots
                .iter()
                .filter(|s| !s.degenerate && !s.ambiguous)
                .map(|s| s.count_up_to(h) as f64)
                .collect();
            let (mean, se) = mean_and_error(&counts);
            IntegralEstimate {
                horizon: h,
                value: area * mean,
                std_err: area * se,
                samples: counts.len(),
                dropped: samples - counts.len(),
            }
        })
        .collect())
}

/// Direct counting integral `∫ n_T(x, y) dy` by sampling `y` from the
/// Riemannian volume.
pub fn counting_integral_direct(
    metric: &SurfaceMetric,
    x: &SurfacePoint,
    horizon: f64,
    samples: usize,
    seed: u64,
    settings: CountSettings,
) -> Result<IntegralEstimate> {
    Ok(counting_integral_series(metric, x, &[horizon], samples, seed, settings)?.remove(0))
}

pub(crate) fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `∫_0^T dσ ∫_{S_x} |b_θ(σ)| dθ` where `b_θ` is the normal Jacobi field with
/// `b(0) = 0, b'(0) = 1` along the geodesic with initial direction `θ`.
/// Composite Simpson in `σ` (`sigma_steps` intervals, rounded up to even),
/// equally spaced angles on the unit circle.
pub fn berger_bott_integral(
    metric: &SurfaceMetric,
    x: &SurfacePoint,
    horizon: f64,
    sphere_samples: usize,
    sigma_steps: usize,
) -> Result<f64> {
    Ok(berger_bott_series(metric, x, &[horizon], sphere_samples, sigma_steps)?[0])
}

/// [`berger_bott_integral`] at several horizons sharing one set of geodesics.
pub fn berger_bott_series(
    metric: &SurfaceMetric,
    x: &SurfacePoint,
    horizons: &[f64],
    sphere_samples: usize,
    sigma_steps: usize,
) -> Result<Vec<f64>> {
    if sphere_samples == 0 || sigma_steps == 0 {
        return Err(GeoflowError::InvalidInput("sample counts must be positive".into()));
    }
    if horizons.iter().any(|&t| !(t >= 0.0)) {
        return Err(GeoflowError::InvalidInput("horizons must be >= 0".into()));
    }
    let t_max = horizons.iter().cloned().fold(0.0, f64::max);
    if t_max == 0.0 {
        return Ok(vec![0.0; horizons.len()]);
    }
    let origin = metric.canonical(x);
    let frame = orthonormal_frame(metric, &origin);
    let flow = FlowSettings::with_tol(1e-10);
    // one fine grid; each horizon is integrated on its own Simpson grid by
    // sampling the fields there
    let grids: Vec<Vec<f64>> = horizons
        .iter()
        .map(|&h| {
            let n = sigma_steps + sigma_steps % 2;
            (0..=n).map(|k| h * k as f64 / n as f64).collect()
        })
        .collect();
    let mut all: Vec<f64> = grids.iter().flatten().cloned().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let per_angle: Vec<Vec<f64>> = (0..sphere_samples)
        .into_par_iter()
        .map(|j| {
            let start = DirectionFan::start_state(&frame, &origin, TAU * j as f64 / sphere_samples as f64);
            let prop = propagate(metric, &start, t_max, &[[0.0, 1.0]], flow, Record::At(&all))?;
            Ok(prop.samples.iter().map(|s| s.normals[0][0].abs()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(horizons
        .iter()
        .zip(&grids)
        .map(|(&h, grid)| {
            if h == 0.0 {
                return 0.0;
            }
            let idx: Vec<usize> = grid
                .iter()
                .map(|t| all.binary_search_by(|a| a.total_cmp(t)).expect("grid time present"))
                .collect();
            let step = h / (grid.len() - 1) as f64;
            per_angle
                .iter()
                .map(|vals| {
                    let v: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
                    simpson(&v, step)
                })
                .sum::<f64>()
                * TAU
                / sphere_samples as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_inside_and_outside() {
        let l = barycentric_origin(&[-1.0, -1.0], &[1.0, -1.0], &[0.0, 1.0]).unwrap();
        assert!(l.iter().all(|&v| v > 0.0));
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let l = barycentric_origin(&[1.0, 1.0], &[2.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(l.iter().any(|&v| v < 0.0));
        assert!(barycentric_origin(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]).is_none());
    }

    #[test]
    fn torus_self_count_is_lattice_count() {
        let t = SurfaceMetric::unit_torus();
        let x = SurfacePoint::new(0, 0.0, 0.0);
        let r = count_geodesics(&t, &x, &x, 2.5, CountSettings::default()).unwrap();
        assert!(r.includes_trivial);
        assert_eq!(r.count, 21, "lengths {:?}", r.lengths);
    }

    #[test]
    fn sphere_pair_at_unit_distance() {
        let s = SurfaceMetric::unit_sphere();
        let x = SurfacePoint::new(0, 0.0, 0.0);
        // point at colatitude 1 from the chart centre
        let y = s.point_from_ambient(&[1f64.sin(), 0.0, -1f64.cos()]).unwrap();
        let xa = s.ambient(&x).unwrap();
        let ya = s.ambient(&y).unwrap();
        let dot: f64 = (0..3).map(|k| xa[k] * ya[k]).sum();
        let d = dot.acos();
        let r = count_geodesics(&s, &x, &y, 7.0, CountSettings::default()).unwrap();
        assert_eq!(r.count, 2, "lengths {:?}", r.lengths);
        assert!((r.lengths[0] - d).abs() < 1e-6);
        assert!((r.lengths[1] - (TAU - d)).abs() < 1e-6);
        assert!(!r.degenerate);
    }

    #[test]
    fn short_horizon_counts_nothing() {
        let s = SurfaceMetric::unit_sphere();
        let x = SurfacePoint::new(0, 0.0, 0.0);
        let y = SurfacePoint::new(0, 0.8, 0.0);
        let r = count_geodesics(&s, &x, &y, 0.1, CountSettings::default()).unwrap();
        assert_eq!(r.count, 0);
        let r = count_geodesics(&s, &x, &x, 0.1, CountSettings::default()).unwrap();
        assert_eq!(r.count, 1);
    }

    #[test]
    fn antipode_is_degenerate() {
        let s = SurfaceMetric::unit_sphere();
        let x = SurfacePoint::new(0, 0.0, 0.0);
        let y = SurfacePoint::new(1, 0.0, 0.0);
        let r = count_geodesics(&s, &x, &y, 4.0, CountSettings::default()).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn berger_bott_closed_forms() {
        let s = SurfaceMetric::unit_sphere();
        let x = SurfacePoint::new(0, 0.2, -0.1);
        let v = berger_bott_integral(&s, &x, PI, 64, 400).unwrap();
        assert!((v - 4.0 * PI).abs() < 1e-6, "{v}");
        let t = SurfaceMetric::unit_torus();
        let v = berger_bott_integral(&t, &SurfacePoint::new(0, 0.3, 0.3), 3.0, 16, 10).unwrap();
        assert!((v - 9.0 * PI).abs() < 1e-9);
        assert_eq!(
            berger_bott_integral(&t, &SurfacePoint::new(0, 0.3, 0.3), 0.0, 16, 10).unwrap(),
            0.0
        );
    }

    #[test]
    fn count_json_has_expected_keys() {
        let t = SurfaceMetric::unit_torus();
        let x = SurfacePoint::new(0, 0.0, 0.0);
        let r = count_geodesics(&t, &x, &SurfacePoint::new(0, 0.5, 0.0), 0.6, CountSettings::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["x", "y", "T", "lengths", "count", "degenerate"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["count"], 2);
    }
}
