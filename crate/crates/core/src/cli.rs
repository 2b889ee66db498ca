//! Command-line front end.
//!
//! Every report is a JSON document carrying `"schema": 1`, the command, the
//! fully resolved configuration (including the seed) and the results.
//! Settings come from flags, then the `--config` file, then defaults.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adapted::{
    f_grid, tube_radius_probe, verify_theorem_mero, write_fsample_csv, CurvatureProfile, MeroGrid, TubeRadius,
};
use crate::counting::{berger_bott_integral, count_geodesics, counting_integral_direct, CountSettings};
use crate::entropy::{
    fit_entropy, jacobi_det_series, mane_series, spanning_series, GrowthSeries, Method, PairSampling, SpanningMesh,
};
use crate::error::{GeoflowError, Result};
use crate::flow::{flow_differential_fd, integrate_geodesic, jacobi_at, jacobi_propagate, FlowSettings, PhasePoint};
use crate::geometry::{MetricKind, MetricRegistry, MetricSpec, SurfaceMetric, SurfacePoint};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "geoflow",
    version,
    about = "Geodesic flows, geodesic counting, entropy and tube radii on surfaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Growth series and entropy estimates.
    Entropy(EntropyArgs),
    /// Geodesic arcs joining two points.
    Count(CountArgs),
    /// Tube radius along a leaf from the f-matrix.
    Tube(TubeArgs),
    /// Invariant checks for one metric.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Metric: sphere, torus, ellipsoid, paternain, a registered custom
    /// name, inline JSON, or @file.json.
    #[arg(long)]
    pub metric: Option<String>,
    /// Perturbation size of the Paternain metric.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: GEOFLOW_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with defaults for any flag (keys as the long flag names).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated: mane, jacobi-det, spanning, separated, covering, all.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long = "Tmin")]
    pub t_min: Option<f64>,
    #[arg(long = "Tmax")]
    pub t_max: Option<f64>,
    #[arg(long = "Tsteps")]
    pub t_steps: Option<usize>,
    /// Pair samples (mane) or phase-space samples (jacobi-det).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Distinct first endpoints for mane.
    #[arg(long)]
    pub x_samples: Option<usize>,
    /// Radius for spanning, separated and covering counts.
    #[arg(long)]
    pub span_eps: Option<f64>,
    #[arg(long)]
    pub mesh_base: Option<usize>,
    #[arg(long)]
    pub mesh_angles: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub common: Common,
    /// Point as `u,v` (chart 0), `chart:u,v`, or an ambient `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Directions in the initial fan.
    #[arg(long)]
    pub directions: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TubeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Constant curvature.
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Curvature profile as JSON or @file.json.
    #[arg(long)]
    pub profile: Option<String>,
    /// Start point of the leaf when fitting along a geodesic of --metric.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub angle: Option<f64>,
    #[arg(long)]
    pub half_length: Option<f64>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub tau_steps: Option<usize>,
    /// Also check f(0), f'(0), symmetry and Im f > 0 on a 50x50 grid.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Horizon of the counting-integral comparison.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Targets for the counting-integral comparison.
    #[arg(long)]
    pub samples: Option<usize>,
}

/// Values loaded from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigFile {
    pub metric: Option<Value>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub method: Option<String>,
    #[serde(rename = "Tmin")]
    pub t_min: Option<f64>,
    #[serde(rename = "Tmax")]
    pub t_max: Option<f64>,
    #[serde(rename = "Tsteps")]
    pub t_steps: Option<usize>,
    pub samples: Option<usize>,
    pub x_samples: Option<usize>,
    pub span_eps: Option<f64>,
    pub mesh_base: Option<usize>,
    pub mesh_angles: Option<usize>,
    pub x: Option<String>,
    pub y: Option<String>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub directions: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub profile: Option<Value>,
    pub angle: Option<f64>,
    pub half_length: Option<f64>,
    pub degree: Option<usize>,
    pub tau_max: Option<f64>,
    pub tau_steps: Option<usize>,
    pub verify: Option<bool>,
}

fn config_error(msg: impl Into<String>) -> GeoflowError {
    GeoflowError::InvalidInput(msg.into())
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn read_json_arg(s: &str) -> Result<String> {
    match s.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| config_error(format!("{path}: {e}"))),
        None => Ok(s.to_string()),
    }
}

/// Resolves a metric flag value into a spec.
pub fn parse_metric(text: &str, eps: Option<f64>, registry: &MetricRegistry) -> Result<MetricSpec> {
    let text = read_json_arg(text)?;
    let trimmed = text.trim();
    let spec = if trimmed.starts_with('{') {
        MetricSpec::from_json(trimmed)?
    } else {
        match trimmed {
            "sphere" | "round-sphere" => MetricSpec::RoundSphere {
                radius: 1.0,
                atlas_rotation: None,
            },
            "torus" | "flat-torus" => MetricSpec::FlatTorus {
                basis: [[1.0, 0.0], [0.0, 1.0]],
            },
            "ellipsoid" => MetricSpec::Ellipsoid {
                a: crate::geometry::DEFAULT_ELLIPSOID_AXES,
                atlas_rotation: None,
            },
            "paternain" => MetricSpec::Paternain {
                a: crate::geometry::DEFAULT_ELLIPSOID_AXES,
                eps: eps.unwrap_or(0.05),
                r: crate::geometry::DEFAULT_PATERNAIN_DIRECTION,
                atlas_rotation: None,
            },
            name => {
                registry.get(name)?;
                MetricSpec::Custom { name: name.to_string() }
            }
        }
    };
    if let Some(e) = eps {
        match &spec {
            MetricSpec::Paternain { eps: inner, .. } if *inner == e => {}
            MetricSpec::Paternain { .. } => return Err(config_error("--eps conflicts with the metric JSON")),
            _ => return Err(config_error("--eps only applies to the paternain metric")),
        }
    }
    Ok(spec)
}

fn resolve_metric(
    common: &Common,
    file: &ConfigFile,
    registry: &MetricRegistry,
) -> Result<(MetricSpec, SurfaceMetric)> {
    let eps = common.eps.or(file.eps);
    let spec = match (&common.metric, &file.metric) {
        (Some(m), _) => parse_metric(m, eps, registry)?,
        (None, Some(Value::String(m))) => parse_metric(m, eps, registry)?,
        (None, Some(v)) => parse_metric(&v.to_string(), eps, registry)?,
        (None, None) => return Err(config_error("--metric is required")),
    };
    let metric = spec.build(registry)?;
    Ok((spec, metric))
}

/// Parses `u,v`, `chart:u,v` or an ambient `x,y,z`.
pub fn parse_point(metric: &SurfaceMetric, text: &str) -> Result<SurfacePoint> {
    let (chart, rest) = match text.split_once(':') {
        Some((c, r)) => (
            Some(
                c.trim()
                    .parse::<usize>()
                    .map_err(|_| config_error(format!("bad chart in '{text}'")))?,
            ),
            r,
        ),
        None => (None, text),
    };
    let nums: Vec<f64> = rest
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| config_error(format!("bad point '{text}'")))?;
    let p = match (chart, nums.len()) {
        (c, 2) => SurfacePoint::new(c.unwrap_or(0), nums[0], nums[1]),
        (None, 3) => metric
            .point_from_ambient(&[nums[0], nums[1], nums[2]])
            .ok_or_else(|| config_error(format!("'{text}' is not a point of the embedded surface")))?,
        _ => return Err(config_error(format!("bad point '{text}'"))),
    };
    if p.chart >= metric.num_charts() || !metric.in_domain(&p) {
        return Err(GeoflowError::PointOutsideChart {
            chart: p.chart,
            u: p.coords[0],
            v: p.coords[1],
        });
    }
    metric.metric_eval(&p)?;
    Ok(p)
}

fn threads(common: &Common, file: &ConfigFile) -> Result<usize> {
    let env = match std::env::var("GEOFLOW_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| config_error("GEOFLOW_THREADS must be an integer"))?,
        ),
        Err(_) => None,
    };
    let n = common
        .threads
        .or(env)
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if n == 0 {
        return Err(config_error("--threads must be ≥ 1"));
    }
    Ok(n)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![b];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Outcome of a command: the JSON report, extra files and the exit code.
pub struct Outcome {
    pub report: Value,
    pub csv: Vec<(String, Vec<u8>)>,
    pub code: i32,
}

fn envelope(command: &str, config: Value, results: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "config": config,
        "results": results,
    })
}

pub fn run_entropy(args: &EntropyArgs, registry: &MetricRegistry) -> Result<Outcome> {
    let file = load_config(&args.common.config)?;
    let (spec, metric) = resolve_metric(&args.common, &file, registry)?;
    let method_text = pick(&args.method, &file.method, "mane".to_string());
    let mut methods: Vec<Method> = Vec::new();
    for m in method_text.split(',').map(str::trim) {
        if m == "all" {
            methods.extend([
                Method::Mane,
                Method::JacobiDet,
                Method::Spanning,
                Method::Separated,
                Method::Covering,
            ]);
        } else {
            methods.push(m.parse()?);
        }
    }
    methods.dedup();
    let t_min = pick(&args.t_min, &file.t_min, 2.0);
    let t_max = pick(&args.t_max, &file.t_max, 30.0);
    let t_steps = pick(&args.t_steps, &file.t_steps, 15);
    if !(t_max > t_min) || t_min < 0.0 || t_steps < 5 {
        return Err(config_error("need 0 ≤ Tmin < Tmax and Tsteps ≥ 5"));
    }
    let horizons = linspace(t_min, t_max, t_steps);
    let seed = pick(&args.common.seed, &file.seed, 1);
    let x_samples = pick(&args.x_samples, &file.x_samples, 8);
    let default_samples = if methods == [Method::JacobiDet] { 2000 } else { 800 };
    let samples = pick(&args.samples, &file.samples, default_samples);
    let default_span = if matches!(metric.kind(), MetricKind::FlatTorus { .. } | MetricKind::Custom(_)) {
        0.2 * metric.length_scale()
    } else {
        1.0
    };
    let span_eps = pick(&args.span_eps, &file.span_eps, default_span);
    let mut mesh = SpanningMesh::for_radius(&metric, span_eps);
    mesh.base_points = pick(&args.mesh_base, &file.mesh_base, mesh.base_points);
    mesh.angles = pick(&args.mesh_angles, &file.mesh_angles, mesh.angles);
    mesh.seed = seed;
    let exploratory = matches!(spec, MetricSpec::Paternain { .. });
    let spanning_used = methods
        .iter()
        .any(|m| matches!(m, Method::Spanning | Method::Separated | Method::Covering));

    let config = json!({
        "metric": spec,
        "methods": methods,
        "Tmin": t_min,
        "Tmax": t_max,
        "Tsteps": t_steps,
        "horizons": horizons,
        "samples": samples,
        "x_samples": x_samples,
        "span_eps": if spanning_used { json!(span_eps) } else { Value::Null },
        "mesh": if spanning_used { json!(mesh) } else { Value::Null },
        "seed": seed,
    });

    let mut spanning: Option<GrowthSeries> = None;
    let mut results = Vec::new();
    let mut csv = Vec::new();
    let mut code = 0;
    for method in &methods {
        let series = match method {
            Method::Mane => {
                let xs = x_samples.min(samples).max(1);
                let sampling = PairSampling {
                    x_samples: xs,
                    y_per_x: samples.div_ceil(xs),
                };
                mane_series(&metric, &horizons, sampling, seed, CountSettings::default())
            }
            Method::JacobiDet => jacobi_det_series(&metric, &horizons, samples, seed),
            Method::Spanning | Method::Separated | Method::Covering => {
                if spanning.is_none() {
                    spanning = Some(spanning_series(&metric, span_eps, &horizons, mesh)?);
                }
                let base = spanning.clone().expect("computed above");
                let diag = base.spanning.clone().expect("spanning diagnostics");
                let values: Vec<f64> = match method {
                    Method::Separated => diag.separated.iter().map(|&v| v as f64).collect(),
                    Method::Covering => diag.covering.iter().map(|&v| v as f64).collect(),
                    _ => base.values.clone(),
                };
                Ok(GrowthSeries {
                    method: *method,
                    values,
                    ..base
                })
            }
        };
        let series = series?;
        let mut warnings = Vec::new();
        let estimate = match series.validate() {
            Ok(()) => {
                let est = fit_entropy(&series)?;
                if est.non_monotone {
                    warnings.push("non-monotone-series".to_string());
                }
                Some(est)
            }
            Err(e) => {
                warnings.push(format!("degenerate series: {e}"));
                code = 2;
                None
            }
        };
        if series.dropped > 0 {
            warnings.push(format!("{} degenerate samples dropped", series.dropped));
        }
        if let Some(from) = series.spanning.as_ref().and_then(|d| d.saturated_from) {
            warnings.push(format!(
                "mesh does not resolve d_T from T = {from}; counts may saturate"
            ));
        }
        for w in &warnings {
            eprintln!("warning [{}]: {w}", method.as_str());
        }
        let mut buf = Vec::new();
        series.write_csv(&mut buf)?;
        csv.push((format!("series-{}.csv", method.as_str()), buf));
        results.push(json!({
            "method": method,
            "series": series,
            "estimate": estimate,
            "exploratory": exploratory,
            "warnings": warnings,
        }));
    }
    let mut report = envelope("entropy", config, Value::Array(results));
    report["exploratory"] = json!(exploratory);
    Ok(Outcome { report, csv, code })
}

pub fn run_count(args: &CountArgs, registry: &MetricRegistry) -> Result<Outcome> {
    let file = load_config(&args.common.config)?;
    let (spec, metric) = resolve_metric(&args.common, &file, registry)?;
    let xs = pick(&args.x, &file.x, String::new());
    let ys = pick(&args.y, &file.y, xs.clone());
    if xs.is_empty() {
        return Err(config_error("--x is required"));
    }
    let x = parse_point(&metric, &xs)?;
    let y = parse_point(&metric, &ys)?;
    let horizon = args
        .horizon
        .or(file.horizon)
        .ok_or_else(|| config_error("--T is required"))?;
    let mut settings = CountSettings::default();
    settings.directions = pick(&args.directions, &file.directions, settings.directions);
    let seed = pick(&args.common.seed, &file.seed, 1);
    let config = json!({
        "metric": spec,
        "x": x,
        "y": y,
        "T": horizon,
        "settings": settings,
        "seed": seed,
    });
    let result = count_geodesics(&metric, &x, &y, horizon, settings)?;
    let code = if result.degenerate { 2 } else { 0 };
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| config_error(format!("csv: {e}"));
        w.write_record(["index", "length"]).map_err(io)?;
        for (i, l) in result.lengths.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| config_error(format!("csv: {e}")))?;
    }
    let results = serde_json::to_value(&result).expect("count result serialises");
    Ok(Outcome {
        report: envelope("count", config, results),
        csv: vec![("lengths.csv".into(), buf)],
        code,
    })
}

pub fn run_tube(args: &TubeArgs, registry: &MetricRegistry) -> Result<Outcome> {
    let file = load_config(&args.common.config)?;
    let tau_max = pick(&args.tau_max, &file.tau_max, 5.0);
    let tau_steps = pick(&args.tau_steps, &file.tau_steps, 50);
    let k = args.k.or(file.k);
    let profile_text = args.profile.clone().or_else(|| {
        file.profile.as_ref().map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    });
    let has_metric = args.common.metric.is_some() || file.metric.is_some();
    let (profile, metric_spec) = match (k, profile_text, has_metric) {
        (Some(k), None, false) => (CurvatureProfile::constant(k), None),
        (None, Some(text), false) => {
            let p: CurvatureProfile =
                serde_json::from_str(&read_json_arg(&text)?).map_err(|e| config_error(format!("profile JSON: {e}")))?;
            (p, None)
        }
        (None, None, true) => {
            let (spec, metric) = resolve_metric(&args.common, &file, registry)?;
            let xs = pick(&args.x, &file.x, "0:0.2,0.3".to_string());
            let x = parse_point(&metric, &xs)?;
            let angle = pick(&args.angle, &file.angle, 0.0);
            let half = pick(&args.half_length, &file.half_length, 4.0);
            let degree = pick(&args.degree, &file.degree, 32);
            let theta = PhasePoint::unit(&metric, x, angle);
            (
                CurvatureProfile::along_geodesic(&metric, &theta, half, degree)?,
                Some(spec),
            )
        }
        _ => return Err(config_error("give exactly one of --K, --profile or --metric")),
    };
    let verify = args.verify || file.verify.unwrap_or(false);
    let config = json!({
        "profile": profile,
        "metric": metric_spec,
        "tau_max": tau_max,
        "tau_steps": tau_steps,
        "verify": verify,
    });
    let probe = tube_radius_probe(&profile, tau_max, tau_steps)?;
    let mut results = json!({
        "radius": probe.radius,
        "display": probe.radius.to_string(),
        "entire_up_to_tau_max": matches!(probe.radius, TubeRadius::AtLeast { .. }),
        "sigma_samples": probe.sigma_samples,
        "excluded_poles": probe.excluded_poles,
        "strip_half_width": if probe.strip_half_width.is_finite() { json!(probe.strip_half_width) } else { Value::Null },
    });
    let mut csv = Vec::new();
    if verify {
        let (a, b) = profile.real_range();
        let range = if a.is_finite() { (a, b) } else { (-PI, PI) };
        let tau = 3.0f64.min(profile.strip_half_width());
        let grid = MeroGrid::new(range, tau, 50);
        let report = verify_theorem_mero(&profile, grid)?;
        results["verify"] = serde_json::to_value(&report).expect("report serialises");
        let mut buf = Vec::new();
        write_fsample_csv(&f_grid(&profile, grid), &mut buf)?;
        csv.push(("fsamples.csv".to_string(), buf));
    }
    Ok(Outcome {
        report: envelope("tube", config, results),
        csv,
        code: 0,
    })
}

fn check(name: &str, pass: bool, value: Value, detail: impl Into<String>) -> Value {
    json!({ "name": name, "pass": pass, "value": value, "detail": detail.into() })
}

pub fn run_validate(args: &ValidateArgs, registry: &MetricRegistry) -> Result<Outcome> {
    let file = load_config(&args.common.config)?;
    let seed = pick(&args.common.seed, &file.seed, 1);
    let horizon = pick(&args.horizon, &file.horizon, 5.0);
    let samples = pick(&args.samples, &file.samples, 2000);
    let mut checks = Vec::new();
    let built = resolve_metric(&args.common, &file, registry);
    let (spec, metric) = match built {
        Ok(v) => v,
        Err(e) => {
            checks.push(check("metric", false, json!(e.kind()), e.to_string()));
            let config = json!({ "metric": args.common.metric.clone(), "seed": seed });
            return Ok(Outcome {
                report: envelope("validate", config, json!({ "pass": false, "checks": checks })),
                csv: Vec::new(),
                code: 1,
            });
        }
    };
    let config = json!({ "metric": spec, "seed": seed, "T": horizon, "samples": samples });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // positive definiteness at sampled points
    let mut spd_fail = None;
    for _ in 0..1000 {
        let p = metric.sample_point(&mut rng);
        if let Err(e) = metric.metric_eval(&p) {
            spd_fail = Some(e);
            break;
        }
    }
    checks.push(check(
        "metric-positive-definite",
        spd_fail.is_none(),
        json!(1000),
        spd_fail
            .map(|e| e.to_string())
            .unwrap_or_else(|| "1000 sampled points".into()),
    ));

    let random_state = |rng: &mut ChaCha8Rng| {
        let p = metric.sample_point(rng);
        PhasePoint::unit(&metric, p, rng.gen_range(0.0..2.0 * PI))
    };

    let mut drift: f64 = 0.0;
    for _ in 0..3 {
        let theta = random_state(&mut rng);
        drift = drift.max(integrate_geodesic(&metric, &theta, 100.0, FlowSettings::default().tol)?.energy_drift);
    }
    checks.push(check(
        "energy-drift",
        drift < 1e-6,
        json!(drift),
        "max over 3 geodesics, T = 100",
    ));

    let settings = FlowSettings::with_tol(1e-12);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta = random_state(&mut rng);
        let j0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let j0dot = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let (_, jac) = jacobi_at(&metric, &theta, 5.0, j0, j0dot, settings)?;
        let fd = flow_differential_fd(&metric, &theta, 5.0, j0, j0dot, 1e-5, settings)?;
        let (a, b) = (jac.as_array(), fd.as_array());
        let num: f64 = (0..4).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    checks.push(check(
        "flow-differential",
        worst < 1e-3,
        json!(worst),
        "Jacobi vs finite differences, 10 states, T = 5",
    ));

    let theta = random_state(&mut rng);
    let arc = integrate_geodesic(&metric, &theta, 20.0, 1e-11)?;
    let u = jacobi_propagate(&metric, &arc, [0.0, 1.0], [0.0, 0.0], 1e-11)?;
    let w = jacobi_propagate(&metric, &arc, [0.0, 0.0], [0.0, 1.0], 1e-11)?;
    let wr = u
        .iter()
        .zip(&w)
        .map(|(a, b)| (a.j_normal * b.jdot_normal - b.j_normal * a.jdot_normal - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(check("wronskian", wr < 1e-7, json!(wr), "normal Jacobi fields, T = 20"));

    let mut kmin = f64::INFINITY;
    for _ in 0..10_000 {
        let p = metric.sample_point(&mut rng);
        kmin = kmin.min(metric.gauss_curvature(&p)?);
    }
    let positive_family = matches!(
        metric.kind(),
        MetricKind::Paternain { .. } | MetricKind::Ellipsoid { .. } | MetricKind::RoundSphere { .. }
    );
    checks.push(check(
        "curvature-sign",
        !positive_family || kmin > 0.0,
        json!(kmin),
        if positive_family {
            "min K over 10^4 points, must be > 0"
        } else {
            "min K over 10^4 points"
        },
    ));

    let x = metric.sample_point(&mut rng);
    let direct = counting_integral_direct(&metric, &x, horizon, samples, seed, CountSettings::default())?;
    let bb = berger_bott_integral(&metric, &x, horizon, 256, 2000)?;
    let gap = (direct.value - bb).abs() / bb;
    checks.push(check(
        "counting-integral",
        gap < 0.02,
        json!({ "direct": direct.value, "std_err": direct.std_err, "jacobi": bb, "relative_gap": gap, "dropped": direct.dropped }),
        format!("∫ n_T(x, y) dy against the Jacobi-determinant integral at T = {horizon}"),
    ));

    let pass = checks.iter().all(|c| c["pass"] == json!(true));
    Ok(Outcome {
        report: envelope("validate", config, json!({ "pass": pass, "checks": checks })),
        csv: Vec::new(),
        code: if pass { 0 } else { 2 },
    })
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Entropy(a) => &a.common,
        Command::Count(a) => &a.common,
        Command::Tube(a) => &a.common,
        Command::Validate(a) => &a.common,
    }
}

fn write_outputs(outcome: &Outcome, name: &str, out: Option<&Path>, format: Format) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(&outcome.report).expect("report serialises") + "\n";
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{name}.json")), &text)?;
        for (file, bytes) in &outcome.csv {
            fs::write(dir.join(file), bytes)?;
        }
    }
    let mut stdout = std::io::stdout().lock();
    match format {
        Format::Json => stdout.write_all(text.as_bytes()),
        Format::Csv if !outcome.csv.is_empty() => {
            for (i, (_, bytes)) in outcome.csv.iter().enumerate() {
                if i > 0 {
                    stdout.write_all(b"\n")?;
                }
                stdout.write_all(bytes)?;
            }
            Ok(())
        }
        Format::Csv => stdout.write_all(text.as_bytes()),
    }
}

/// Exit code for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(e: &GeoflowError) -> i32 {
    match e {
        GeoflowError::InvalidInput(_)
        | GeoflowError::InvalidMetric(_)
        | GeoflowError::UnknownCustomMetric(_)
        | GeoflowError::NonPositiveDefinite { .. }
        | GeoflowError::PointOutsideChart { .. }
        | GeoflowError::NotUnitSpeed { .. }
        | GeoflowError::MeshTooCoarse { .. }
        | GeoflowError::OutsideValidityStrip { .. } => 1,
        _ => 2,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let registry = MetricRegistry::with_builtins();
    let c = common(&cli.command).clone();
    let file = match load_config(&c.config) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            return 1;
        }
    };
    let n = match threads(&c, &file) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error[thread-pool]: {e}");
            return 1;
        }
    };
    let (name, result) = pool.install(|| match &cli.command {
        Command::Entropy(a) => ("entropy", run_entropy(a, &registry)),
        Command::Count(a) => ("count", run_count(a, &registry)),
        Command::Tube(a) => ("tube", run_tube(a, &registry)),
        Command::Validate(a) => ("validate", run_validate(a, &registry)),
    });
    let format = c.format.or(file.format).unwrap_or(Format::Json);
    let out = c.out.clone().or(file.out.clone());
    match result {
        Ok(outcome) => {
            if let Err(e) = write_outputs(&outcome, name, out.as_deref(), format) {
                eprintln!("error[io]: {e}");
                return 1;
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            exit_code(&e)
        }
    }
}
