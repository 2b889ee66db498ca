//! Growth series for the geodesic flow and entropy fits.
//!
//! Three routes produce a [`GrowthSeries`]: the double integral of the
//! counting function over pairs of points, the integral of the vertical
//! Jacobi determinant over the unit tangent bundle, and greedy spanning /
//! separated sets for the Bowen metrics `d_T` on a finite mesh.
//! [`fit_entropy`] turns a series into an [`EntropyEstimate`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::counting::{mean_and_error, CountSettings, DirectionFan, Shots};
use crate::error::{GeoflowError, Result};
use crate::flow::{gram_volume, orthonormal_frame, propagate, FlowSettings, PhasePoint, Record};
use crate::geometry::SurfaceMetric;

const TAU: f64 = 2.0 * PI;

/// Which quantity a series measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mane,
    JacobiDet,
    Spanning,
    Separated,
    Covering,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mane => "mane",
            Method::JacobiDet => "jacobi-det",
            Method::Spanning => "spanning",
            Method::Separated => "separated",
            Method::Covering => "covering",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = GeoflowError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mane" => Ok(Method::Mane),
            "jacobi-det" => Ok(Method::JacobiDet),
            "spanning" => Ok(Method::Spanning),
            "separated" => Ok(Method::Separated),
            "covering" => Ok(Method::Covering),
            other => Err(GeoflowError::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Extra per-horizon data of a spanning run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanningDiagnostics {
    pub eps: f64,
    pub mesh_size: usize,
    pub covering_radius: f64,
    /// Greedy ε-separated set sizes.
    pub separated: Vec<usize>,
    /// Raw greedy set-cover sizes.
    pub greedy_cover: Vec<usize>,
    /// Upper bounds for the number of sets of `d_T`-diameter at most ε.
    pub covering: Vec<usize>,
    /// Upper bounds for the number of sets of `d_T`-diameter at most 2ε.
    pub covering_double: Vec<usize>,
    /// `cov(2ε) ≤ span ≤ sep ≤ cov(ε)` at every horizon.
    pub ordering_holds: bool,
    /// Covering radius of the mesh for `d_T` at each horizon, from probes.
    pub dt_covering_radius: Vec<f64>,
    /// First horizon at which that radius exceeds ε/4.
    pub saturated_from: Option<f64>,
}

/// Values of a growth quantity on a grid of horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub method: Method,
    pub horizons: Vec<f64>,
    pub values: Vec<f64>,
    pub mc_errors: Vec<f64>,
    pub samples: usize,
    /// Samples excluded as degenerate (conjugate or focal targets).
    pub dropped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spanning: Option<SpanningDiagnostics>,
}

impl GrowthSeries {
    pub fn new(method: Method, horizons: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = horizons.len();
        let s = Self {
            method,
            horizons,
            values,
            mc_errors: vec![0.0; n],
            samples: 0,
            dropped: 0,
            spanning: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.horizons.len() || self.mc_errors.len() != self.horizons.len() {
            return Err(GeoflowError::InvalidInput("series arrays differ in length".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeoflowError::InvalidInput(
                "horizons must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !(*v > 0.0)) {
            return Err(GeoflowError::InvalidInput("series values must be positive".into()));
        }
        Ok(())
    }

    /// The series seen by a flow running `factor` times slower.
    pub fn rescale_time(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.horizons = self.horizons.iter().map(|t| t * factor).collect();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serialises")
    }

    /// Two-column `T,value` CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| GeoflowError::InvalidInput(format!("csv: {e}"));
        w.write_record(["T", "value"]).map_err(io)?;
        for (t, v) in self.horizons.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| GeoflowError::InvalidInput(format!("csv: {e}")))
    }
}

/// Shape of a growth series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum GrowthClass {
    Polynomial { degree: u32 },
    Exponential { rate: f64 },
}

/// Fitted exponential growth rate with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub h: f64,
    /// 95% half-width for the fitted rate.
    pub ci: f64,
    pub fit_window: (f64, f64),
    pub method: Method,
    pub growth_class: GrowthClass,
    /// Least-squares slope of `log value` against `T` over the fit window.
    pub raw_slope: f64,
    /// Exponent of the power-law fit over the fit window.
    pub power_exponent: f64,
    /// Small-sample AIC of the exponential fit minus the best polynomial-class fit.
    pub aicc_difference: f64,
    pub non_monotone: bool,
}

impl EntropyEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serialises")
    }
}

/// Options for [`fit_entropy_with`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of the grid (from the top) used for the slope.
    pub window_fraction: f64,
    /// AICc margin required to prefer the exponential model.
    pub tie_margin: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window_fraction: 0.5,
            tie_margin: 2.0,
        }
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    rss: f64,
    slope_se: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 && sxx > 0.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        rss,
        slope_se,
    }
}

/// Fits with the default options.
pub fn fit_entropy(series: &GrowthSeries) -> Result<EntropyEstimate> {
    fit_entropy_with(series, FitOptions::default())
}

/// Classifies the series as polynomial or exponential by comparing the
/// small-sample corrected AIC of `log v = a + b T` against the best of
/// `log v = a + k log T` and polynomials of degree at most 3 (residuals taken
/// in `log v`) on the positive horizons (ties go to polynomial), and
/// reports the slope of `log v` against `T` over the upper part of the grid.
/// A polynomial series has zero entropy, so `h = 0` in that class.
pub fn fit_entropy_with(series: &GrowthSeries, opts: FitOptions) -> Result<EntropyEstimate> {
    series.validate()?;
    let pts: Vec<(f64, f64)> = series
        .horizons
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(GeoflowError::InvalidInput(format!(
            "entropy fit needs at least 5 positive horizons, got {}",
            pts.len()
        )));
    }
    let non_monotone = series.values.windows(2).any(|w| w[1] < w[0]);
    let n = pts.len();
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let log_t: Vec<f64> = t.iter().map(|x| x.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();

    let power = line_fit(&log_t, &y);
    let expo = line_fit(&t, &y);
    let floor = n as f64 * 1e-24;
    let aicc = |rss: f64, k: usize| {
        let nf = n as f64;
        let k = k as f64;
        nf * (rss.max(floor) / nf).ln() + 2.0 * k + 2.0 * k * (k + 1.0) / (nf - k - 1.0)
    };
    // polynomial class: the power law, plus polynomials with a constant term
    // (c0 + c2 T² is not a power law and can look exponential on a short grid)
    let mut poly_aicc = aicc(power.rss, 2);
    for degree in 1..=3usize {
        if n < degree + 3 {
            break;
        }
        let v: Vec<f64> = y.iter().map(|l| l.exp()).collect();
        let Ok(fit) = fit_polynomial(&t, &v, degree) else {
            continue;
        };
        let fitted: Vec<f64> = t.iter().map(|&x| fit.eval(x)).collect();
        if fitted.iter().any(|p| !(*p > 0.0)) {
            continue;
        }
        let rss: f64 = fitted.iter().zip(&y).map(|(p, l)| (p.ln() - l).powi(2)).sum();
        poly_aicc = poly_aicc.min(aicc(rss, degree + 1));
    }
    let aicc_difference = aicc(expo.rss, 2) - poly_aicc;

    let keep = ((n as f64 * opts.window_fraction).ceil() as usize).clamp(3, n);
    let window = n - keep;
    let upper = line_fit(&t[window..], &y[window..]);
    let upper_power = line_fit(&log_t[window..], &y[window..]);
    let dof = (keep as f64 - 2.0).max(1.0);
    let quantile = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    let ci = quantile * upper.slope_se;

    let exponential = aicc_difference < -opts.tie_margin && upper.slope > 0.0;
    let (h, growth_class) = if exponential {
        (upper.slope, GrowthClass::Exponential { rate: upper.slope })
    } else {
        let degree = upper_power.slope.round().max(0.0) as u32;
        (0.0, GrowthClass::Polynomial { degree })
    };
    let _ = (power.intercept, expo.intercept);
    Ok(EntropyEstimate {
        h,
        ci,
        fit_window: (t[window], t[n - 1]),
        method: series.method,
        growth_class,
        raw_slope: upper.slope,
        power_exponent: upper_power.slope,
        aicc_difference,
        non_monotone,
    })
}

/// Least-squares polynomial fit of bounded degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    /// Coefficients in increasing powers of `T`.
    pub coefficients: Vec<f64>,
    /// `‖fit − values‖₂ / ‖values‖₂`.
    pub relative_residual: f64,
    /// Largest pointwise `|fit − value| / value`.
    pub max_relative_deviation: f64,
}

impl PolynomialFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Fits `Σ_{k ≤ degree} c_k T^k` by least squares (SVD).
pub fn fit_polynomial(horizons: &[f64], values: &[f64], degree: usize) -> Result<PolynomialFit> {
    if horizons.len() != values.len() || horizons.len() <= degree {
        return Err(GeoflowError::InvalidInput(
            "not enough points for the polynomial degree".into(),
        ));
    }
    let a = DMatrix::from_fn(horizons.len(), degree + 1, |i, j| horizons[i].powi(j as i32));
    let b = DVector::from_column_slice(values);
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| GeoflowError::InvalidInput(format!("polynomial fit: {e}")))?;
    let fit = PolynomialFit {
        coefficients: c.iter().cloned().collect(),
        relative_residual: 0.0,
        max_relative_deviation: 0.0,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let mut worst: f64 = 0.0;
    for (t, v) in horizons.iter().zip(values) {
        let r = fit.eval(*t) - v;
        num += r * r;
        den += v * v;
        worst = worst.max((r / v).abs());
    }
    Ok(PolynomialFit {
        relative_residual: (num / den).sqrt(),
        max_relative_deviation: worst,
        ..fit
    })
}

fn check_grid(horizons: &[f64], allow_zero: bool) -> Result<f64> {
    if horizons.is_empty() {
        return Err(GeoflowError::InvalidInput("empty horizon grid".into()));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GeoflowError::InvalidInput(
            "horizons must be strictly increasing".into(),
        ));
    }
    let lo = horizons[0];
    if lo < 0.0 || (!allow_zero && lo == 0.0) {
        return Err(GeoflowError::InvalidInput("horizons must be positive".into()));
    }
    Ok(*horizons.last().unwrap())
}

/// Sample sizes for [`mane_series`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairSampling {
    /// Distinct first endpoints; each gets its own fan.
    pub x_samples: usize,
    /// Second endpoints per first endpoint.
    pub y_per_x: usize,
}

impl PairSampling {
    pub fn pairs(&self) -> usize {
        self.x_samples * self.y_per_x
    }
}

/// Monte Carlo estimate of `∫∫ n_T(x, y) dx dy` at each horizon. One set of
/// pairs serves the whole grid: arcs are found once up to the largest
/// horizon and counted by length. Standard errors treat the per-`x` means
/// as the independent replicates.
pub fn mane_series(
    metric: &SurfaceMetric,
    horizons: &[f64],
    sampling: PairSampling,
    seed: u64,
    settings: CountSettings,
) -> Result<GrowthSeries> {
    let t_max = check_grid(horizons, false)?;
    if sampling.x_samples == 0 || sampling.y_per_x == 0 {
        return Err(GeoflowError::InvalidInput("pair samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = metric.quasi_random_sample(sampling.x_samples, &mut rng);
    let seeds: Vec<u64> = (0..sampling.x_samples).map(|_| rng.gen()).collect();
    let mut per_x: Vec<(Vec<f64>, usize)> = Vec::with_capacity(xs.len());
    for ((x, _), s) in xs.iter().zip(&seeds) {
        let fan = DirectionFan::build(metric, x, t_max, settings)?;
        let mut yrng = ChaCha8Rng::seed_from_u64(*s);
        let ys = metric.quasi_random_sample(sampling.y_per_x, &mut yrng);
        let shots: Vec<Shots> = ys
            .par_iter()
            .map(|(y, _)| fan.shots(metric, y))
            .collect::<Result<_>>()?;
        let good: Vec<&Shots> = shots.iter().filter(|s| !s.degenerate && !s.ambiguous).collect();
        let dropped = shots.len() - good.len();
        let means = horizons
            .iter()
            .map(|&h| {
                if good.is_empty() {
                    0.0
                } else {
                    good.iter().map(|s| s.count_up_to(h) as f64).sum::<f64>() / good.len() as f64
                }
            })
            .collect();
        per_x.push((means, dropped));
    }
    let area2 = metric.area().powi(2);
    let mut values = Vec::with_capacity(horizons.len());
    let mut errors = Vec::with_capacity(horizons.len());
    for k in 0..horizons.len() {
        let col: Vec<f64> = per_x.iter().map(|(m, _)| m[k]).collect();
        let (mean, se) = mean_and_error(&col);
        values.push(area2 * mean);
        errors.push(area2 * se);
    }
    Ok(GrowthSeries {
        method: Method::Mane,
        horizons: horizons.to_vec(),
        values,
        mc_errors: errors,
        samples: sampling.pairs(),
        dropped: per_x.iter().map(|(_, d)| d).sum(),
        spanning: None,
    })
}

/// Monte Carlo estimate of `∫_{SM} |det dφ_T|_V| dθ` over the Liouville
/// measure (Riemannian volume times the uniform fibre angle).
pub fn jacobi_det_series(metric: &SurfaceMetric, horizons: &[f64], samples: usize, seed: u64) -> Result<GrowthSeries> {
    jacobi_det_series_with(metric, horizons, samples, seed, FlowSettings::default())
}

pub fn jacobi_det_series_with(
    metric: &SurfaceMetric,
    horizons: &[f64],
    samples: usize,
    seed: u64,
    flow: FlowSettings,
) -> Result<GrowthSeries> {
    let t_max = check_grid(horizons, true)?;
    if samples == 0 {
        return Err(GeoflowError::InvalidInput(
            "need at least one phase-space sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<PhasePoint> = metric
        .quasi_random_sample(samples, &mut rng)
        .into_iter()
        .map(|(p, a)| PhasePoint::unit(metric, p, TAU * a))
        .collect();
    let dets: Vec<Vec<f64>> = states
        .par_iter()
        .map(|theta| {
            let prop = propagate(metric, theta, t_max, &[[0.0, 1.0]], flow, Record::At(horizons))?;
            Ok(prop
                .samples
                .iter()
                .map(|s| {
                    let [u, du] = s.normals[0];
                    gram_volume(&[[s.t, 0.0, 1.0, 0.0], [0.0, u, 0.0, du]])
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let vol = TAU * metric.area();
    let mut values = Vec::new();
    let mut errors = Vec::new();
    for k in 0..horizons.len() {
        let col: Vec<f64> = dets.iter().map(|d| d[k]).collect();
        let (mean, se) = mean_and_error(&col);
        values.push(vol * mean);
        errors.push(vol * se);
    }
    Ok(GrowthSeries {
        method: Method::JacobiDet,
        horizons: horizons.to_vec(),
        values,
        mc_errors: errors,
        samples,
        dropped: 0,
        spanning: None,
    })
}

/// Finite mesh of the unit tangent bundle: quasi-random base points times
/// equally spaced fibre angles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpanningMesh {
    pub base_points: usize,
    pub angles: usize,
    /// Time between samples of the trajectories when evaluating `d_T`. The
    /// sampled maximum can miss growth of order `exp(λ · time_step)`, with
    /// `λ` the local expansion rate.
    pub time_step: f64,
    pub seed: u64,
}

impl SpanningMesh {
    /// A mesh sized so its covering radius is expected to stay below `eps / 4`.
    pub fn for_radius(metric: &SurfaceMetric, eps: f64) -> Self {
        let r = eps / 4.0;
        let base_points = (2.5 * metric.area() / (r * r)).ceil() as usize;
        let angles = ((TAU / (2.0 * r)).ceil() as usize).max(4);
        Self {
            base_points,
            angles,
            time_step: 0.1,
            seed: 1,
        }
    }

    pub fn size(&self) -> usize {
        self.base_points * self.angles
    }
}

/// Distance on the unit tangent bundle: the larger of the locator-space
/// distance of the base points and that of the unit velocities.
#[derive(Debug, Clone, Copy)]
struct Lifted {
    key: [f32; 4],
    vel: [f32; 4],
}

impl Lifted {
    fn of(metric: &SurfaceMetric, theta: &PhasePoint) -> Self {
        let k = metric.key(&theta.base);
        let v = metric.key_velocity(&theta.base, theta.velocity);
        Self {
            key: k.map(|x| x as f32),
            vel: v.map(|x| x as f32),
        }
    }

    #[inline]
    fn dist(&self, other: &Self) -> f32 {
        let mut a = 0.0f32;
        let mut b = 0.0f32;
        for d in 0..4 {
            a += (self.key[d] - other.key[d]).powi(2);
            b += (self.vel[d] - other.vel[d]).powi(2);
        }
        a.max(b).sqrt()
    }
}

struct BaseIndex {
    bin: f64,
    map: HashMap<[i32; 4], Vec<u32>>,
}

impl BaseIndex {
    fn new(points: &[Lifted], bin: f64) -> Self {
        let mut map: HashMap<[i32; 4], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::bin_of(bin, &p.key)).or_default().push(i as u32);
        }
        Self { bin, map }
    }

    fn bin_of(bin: f64, key: &[f32; 4]) -> [i32; 4] {
        key.map(|k| (k as f64 / bin).floor() as i32)
    }

    /// Indices whose base key lies within `bin` of `key` in every coordinate.
    fn near(&self, key: &[f32; 4], mut f: impl FnMut(u32)) {
        let b = Self::bin_of(self.bin, key);
        for m in 0..81i32 {
            let off = [m % 3 - 1, (m / 3) % 3 - 1, (m / 9) % 3 - 1, m / 27 - 1];
            if let Some(list) = self.map.get(&std::array::from_fn(|d| b[d] + off[d])) {
                list.iter().for_each(|&i| f(i));
            }
        }
    }
}

/// Mesh states within `eps` of each other at time zero, stored once per
/// unordered pair (`i < j`) in compressed rows.
struct NearPairs {
    offsets: Vec<usize>,
    nbr: Vec<u32>,
    /// Number of leading horizons at which the pair stays within ε.
    full: Vec<u16>,
    /// Same for ε/2.
    half: Vec<u16>,
}

impl NearPairs {
    fn build(lifted: &[Lifted], eps: f64, never: u16) -> Self {
        let index = BaseIndex::new(lifted, eps);
        let eps32 = eps as f32;
        let rows: Vec<Vec<u32>> = (0..lifted.len())
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                index.near(&lifted[i].key, |j| {
                    if (j as usize) > i && lifted[i].dist(&lifted[j as usize]) <= eps32 {
                        out.push(j);
                    }
                });
                out.sort_unstable();
                out
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut nbr = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for r in rows {
            nbr.extend_from_slice(&r);
            offsets.push(nbr.len());
        }
        let n = nbr.len();
        // time zero: within ε by construction; within ε/2 decided below
        let half = (0..lifted.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                let nbr = &nbr;
                (lo..hi).map(move |e| (i, nbr[e]))
            })
            .map(|(i, j)| {
                if lifted[i].dist(&lifted[j as usize]) as f64 > 0.5 * eps {
                    0
                } else {
                    never
                }
            })
            .collect();
        Self {
            offsets,
            nbr,
            full: vec![never; n],
            half,
        }
    }

    fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Both directions of every pair still within ε at horizon `k`.
    fn symmetric(&self, k: u16) -> (Vec<usize>, Vec<u32>) {
        let m = self.rows();
        let mut deg = vec![0usize; m];
        for i in 0..m {
            for e in self.row(i) {
                if self.full[e] > k {
                    deg[i] += 1;
                    deg[self.nbr[e] as usize] += 1;
                }
            }
        }
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..m].to_vec();
        let mut adj = vec![0u32; offsets[m]];
        for i in 0..m {
            for e in self.row(i) {
                if self.full[e] > k {
                    let j = self.nbr[e] as usize;
                    adj[fill[i]] = j as u32;
                    fill[i] += 1;
                    adj[fill[j]] = i as u32;
                    fill[j] += 1;
                }
            }
        }
        (offsets, adj)
    }
}

/// Greedy spanning and separated set sizes for the Bowen metrics `d_T` on a
/// finite mesh of the unit tangent bundle.
///
/// `span` is the smaller of a lazy greedy set cover by closed `ε`-balls and
/// a greedy maximal `ε`-separated set (which also spans). Separated sizes,
/// covering bounds and the `d_T` covering radius of the mesh at each
/// horizon are attached as diagnostics. Once that radius exceeds `ε/4` the
/// mesh no longer resolves `d_T` and counts saturate.
pub fn spanning_series(metric: &SurfaceMetric, eps: f64, horizons: &[f64], mesh: SpanningMesh) -> Result<GrowthSeries> {
    let t_max = check_grid(horizons, true)?;
    if !(eps > 0.0) {
        return Err(GeoflowError::InvalidInput("ε must be > 0".into()));
    }
    if mesh.base_points == 0 || mesh.angles == 0 || !(mesh.time_step > 0.0) {
        return Err(GeoflowError::InvalidInput("mesh parameters must be positive".into()));
    }
    if horizons.len() >= u16::MAX as usize {
        return Err(GeoflowError::InvalidInput("too many horizons".into()));
    }
    let never = horizons.len() as u16;
    let mut rng = ChaCha8Rng::seed_from_u64(mesh.seed);
    let bases = metric.quasi_random_sample(mesh.base_points, &mut rng);
    let mut states: Vec<PhasePoint> = bases
        .iter()
        .flat_map(|(p, _)| {
            let frame = orthonormal_frame(metric, p);
            (0..mesh.angles).map(move |j| {
                let (s, c) = (TAU * j as f64 / mesh.angles as f64).sin_cos();
                PhasePoint::new(
                    *p,
                    [c * frame[0][0] + s * frame[1][0], c * frame[0][1] + s * frame[1][1]],
                )
            })
        })
        .collect();
    let m = states.len();
    let lifted: Vec<Lifted> = states.iter().map(|s| Lifted::of(metric, s)).collect();

    // probe states for the covering radius, with their nearby mesh states
    let limit = eps / 4.0;
    let index = BaseIndex::new(&lifted, limit);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(mesh.seed ^ 0x5eed);
    let probes: Vec<PhasePoint> = (0..PROBES)
        .map(|_| {
            let p = metric.sample_point(&mut probe_rng);
            PhasePoint::unit(metric, p, probe_rng.gen_range(0.0..TAU))
        })
        .collect();
    let mut probe_pairs: Vec<(u32, u32)> = Vec::new();
    let mut covering_radius: f64 = 0.0;
    for (k, q) in probes.iter().enumerate() {
        let lq = Lifted::of(metric, q);
        let mut best = f32::INFINITY;
        index.near(&lq.key, |i| {
            let d = lq.dist(&lifted[i as usize]);
            best = best.min(d);
            if d as f64 <= limit {
                probe_pairs.push(((m + k) as u32, i));
            }
        });
        covering_radius = covering_radius.max(best as f64);
    }
    if covering_radius > limit {
        return Err(GeoflowError::MeshTooCoarse {
            radius: covering_radius,
            limit,
        });
    }
    drop(index);
    states.extend(probes);

    let mut near = NearPairs::build(&lifted, eps, never);
    drop(lifted);

    // sample times: a uniform grid plus the horizons themselves
    let mut times: Vec<f64> = (0..=(t_max / mesh.time_step).ceil() as usize)
        .map(|k| (k as f64 * mesh.time_step).min(t_max))
        .chain(horizons.iter().cloned())
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let horizons_before = |t: f64| horizons.partition_point(|&h| h < t) as u16;

    let mut probe_max = vec![0.0f32; probe_pairs.len()];
    let mut dt_radius = vec![0.0f64; horizons.len()];
    let flow = FlowSettings::with_tol(1e-9);
    let mut current = states;
    let mut k0 = 0;
    let last = times.len() - 1;
    loop {
        let k1 = (k0 + BLOCK).min(last);
        let stops: Vec<f64> = times[k0..=k1].iter().map(|t| t - times[k0]).collect();
        let tracks: Vec<(Vec<Lifted>, PhasePoint)> = current
            .par_iter()
            .map(|theta| {
                let prop = propagate(metric, theta, stops[stops.len() - 1], &[], flow, Record::At(&stops))?;
                Ok((
                    prop.samples.iter().map(|s| Lifted::of(metric, &s.point)).collect(),
                    prop.end,
                ))
            })
            .collect::<Result<_>>()?;
        let updates: Vec<(usize, Option<u16>, Option<u16>)> = (0..m)
            .into_par_iter()
            .flat_map_iter(|i| {
                let near = &near;
                let tracks = &tracks;
                let times = &times;
                near.row(i).filter_map(move |e| {
                    if near.full[e] != never {
                        return None;
                    }
                    let (a, b) = (&tracks[i].0, &tracks[near.nbr[e] as usize].0);
                    let mut half = None;
                    let mut full = None;
                    for s in 1..a.len() {
                        let d = a[s].dist(&b[s]) as f64;
                        let t = times[k0 + s];
                        if half.is_none() && near.half[e] == never && d > 0.5 * eps {
                            half = Some(horizons_before(t));
                        }
                        if d > eps {
                            full = Some(horizons_before(t));
                            break;
                        }
                    }
                    (half.is_some() || full.is_some()).then_some((e, half, full))
                })
            })
            .collect();
        for (e, half, full) in updates {
            if let Some(h) = half {
                near.half[e] = h;
            }
            if let Some(h) = full {
                near.full[e] = h;
                near.half[e] = near.half[e].min(h);
            }
        }
        let first = if k0 == 0 { 0 } else { 1 };
        for s in first..stops.len() {
            for (p, &(q, i)) in probe_pairs.iter().enumerate() {
                probe_max[p] = probe_max[p].max(tracks[q as usize].0[s].dist(&tracks[i as usize].0[s]));
            }
            let t = times[k0 + s];
            if let Some(h) = horizons.iter().position(|&h| (h - t).abs() < 1e-12) {
                dt_radius[h] = probe_radius(&probe_pairs, &probe_max);
            }
        }
        current = tracks.into_iter().map(|(_, end)| end).collect();
        if k1 == last {
            break;
        }
        k0 = k1;
    }

    let mut spans = Vec::new();
    let mut seps = Vec::new();
    let mut covers = Vec::new();
    let mut covs = Vec::new();
    for k in 0..never {
        let sep = greedy_separated(&near, &near.full, k);
        let (offsets, adj) = near.symmetric(k);
        let cover = greedy_cover(&offsets, &adj);
        seps.push(sep);
        covers.push(cover);
        spans.push(cover.min(sep));
        covs.push(greedy_separated(&near, &near.half, k));
    }
    let ordering_holds = (0..horizons.len()).all(|k| spans[k] <= seps[k] && seps[k] <= covs[k]);
    let saturated_from = horizons
        .iter()
        .zip(&dt_radius)
        .find(|(_, r)| **r > limit)
        .map(|(h, _)| *h);
    Ok(GrowthSeries {
        method: Method::Spanning,
        horizons: horizons.to_vec(),
        values: spans.iter().map(|&s| s as f64).collect(),
        mc_errors: vec![0.0; horizons.len()],
        samples: m,
        dropped: 0,
        spanning: Some(SpanningDiagnostics {
            eps,
            mesh_size: m,
            covering_radius,
            separated: seps,
            greedy_cover: covers,
            covering: covs,
            covering_double: spans,
            ordering_holds,
            dt_covering_radius: dt_radius,
            saturated_from,
        }),
    })
}

const PROBES: usize = 400;
const BLOCK: usize = 16;

/// Largest distance from a probe to its closest candidate. Pairs are grouped
/// by probe.
fn probe_radius(pairs: &[(u32, u32)], dist: &[f32]) -> f64 {
    let mut worst: f32 = 0.0;
    let mut k = 0;
    while k < pairs.len() {
        let probe = pairs[k].0;
        let mut best = f32::INFINITY;
        while k < pairs.len() && pairs[k].0 == probe {
            best = best.min(dist[k]);
            k += 1;
        }
        worst = worst.max(best);
    }
    worst as f64
}

/// Size of a maximal set built in index order whose members are pairwise
/// not linked at horizon `k`. Rows hold only larger indices, which is
/// enough in index order: an earlier member already blocked its later
/// neighbours.
fn greedy_separated(near: &NearPairs, level: &[u16], k: u16) -> usize {
    let mut blocked = vec![false; near.rows()];
    let mut count = 0;
    for i in 0..near.rows() {
        if !blocked[i] {
            count += 1;
            for e in near.row(i) {
                if level[e] > k {
                    blocked[near.nbr[e] as usize] = true;
                }
            }
        }
    }
    count
}

/// Lazy greedy set cover by closed neighbourhoods.
fn greedy_cover(offsets: &[usize], adj: &[u32]) -> usize {
    let m = offsets.len() - 1;
    let mut covered = vec![false; m];
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> =
        (0..m).map(|i| (offsets[i + 1] - offsets[i] + 1, Reverse(i))).collect();
    let gain = |i: usize, covered: &[bool]| {
        usize::from(!covered[i])
            + adj[offsets[i]..offsets[i + 1]]
                .iter()
                .filter(|&&j| !covered[j as usize])
                .count()
    };
    let mut left = m;
    let mut chosen = 0;
    while left > 0 {
        let (estimate, Reverse(i)) = heap.pop().expect("uncovered points remain");
        let g = gain(i, &covered);
        if g == 0 {
            continue;
        }
        if g < estimate {
            heap.push((g, Reverse(i)));
            continue;
        }
        chosen += 1;
        for j in std::iter::once(i as u32).chain(adj[offsets[i]..offsets[i + 1]].iter().copied()) {
            if !covered[j as usize] {
                covered[j as usize] = true;
                left -= 1;
            }
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64) -> GrowthSeries {
        let t: Vec<f64> = (1..=15).map(|k| 2.0 * k as f64).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        GrowthSeries::new(Method::Mane, t, v).unwrap()
    }

    #[test]
    fn quadratic_is_polynomial_with_zero_entropy() {
        let e = fit_entropy(&series(|t| 3.0 * t * t + 1.0)).unwrap();
        assert_eq!(e.growth_class, GrowthClass::Polynomial { degree: 2 });
        assert!(e.h.abs() < 0.02);
    }

    #[test]
    fn exponential_rate_is_recovered() {
        let e = fit_entropy(&series(|t| (0.5 * t).exp())).unwrap();
        match e.growth_class {
            GrowthClass::Exponential { rate } => assert!((rate - 0.5).abs() < 0.05),
            other => panic!("{other:?}"),
        }
        assert!((e.h - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fit_requires_five_points() {
        let s = GrowthSeries::new(Method::Mane, vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(fit_entropy(&s).is_err());
        assert!(GrowthSeries::new(Method::Mane, vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn polynomial_fit_recovers_coefficients() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 2.0 * x + 0.5 * x * x).collect();
        let f = fit_polynomial(&t, &v, 2).unwrap();
        assert!((f.coefficients[2] - 0.5).abs() < 1e-10);
        assert!(f.relative_residual < 1e-12);
    }

    #[test]
    fn greedy_sets_on_a_path() {
        // path 0-1-2-3-4, the last edge gone after the first horizon
        let near = NearPairs {
            offsets: vec![0, 1, 2, 3, 4, 4],
            nbr: vec![1, 2, 3, 4],
            full: vec![2, 2, 2, 1],
            half: vec![0; 4],
        };
        assert_eq!(greedy_separated(&near, &near.full, 0), 3);
        assert_eq!(greedy_separated(&near, &near.half, 0), 5);
        let (o, a) = near.symmetric(0);
        assert_eq!(greedy_cover(&o, &a), 2);
        let (o, a) = near.symmetric(1);
        assert_eq!(a.len(), 6);
        assert_eq!(greedy_cover(&o, &a), 3);
    }

    #[test]
    fn torus_jacobi_det_is_exact() {
        let t = SurfaceMetric::unit_torus();
        let s = jacobi_det_series(&t, &[0.0, 1.0, 10.0], 50, 3).unwrap();
        let vol = TAU;
        assert!((s.values[0] - vol).abs() < 1e-12);
        assert!((s.values[2] - vol * 101.0).abs() < 1e-7);
    }

    #[test]
    fn series_csv_two_columns() {
        let s = series(|t| t);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("T,value\n2,2\n"));
    }
}
