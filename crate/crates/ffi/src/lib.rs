//! C ABI over `geoflow`.
//!
//! Every fallible function returns a [`GeoflowStatus`]. On failure the
//! message is kept per thread and can be fetched with
//! [`geoflow_last_error_message`]. Objects cross the boundary as opaque
//! handles which the caller releases with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use geoflow::adapted::{f_matrix, tube_radius_probe, CurvatureProfile, TubeRadius};
use geoflow::counting::{count_geodesics, CountSettings};
use geoflow::entropy::{fit_entropy, jacobi_det_series, GrowthClass, GrowthSeries, Method};
use geoflow::flow::{integrate_geodesic, vertical_determinant, PhasePoint};
use geoflow::{GeoflowError, MetricRegistry, MetricSpec, SurfaceMetric, SurfacePoint};
use num_complex::Complex64;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidMetric = 3,
    UnknownCustomMetric = 4,
    NonPositiveDefinite = 5,
    PointOutsideChart = 6,
    NotUnitSpeed = 7,
    IntegrationFailed = 8,
    ResolutionTooCoarse = 9,
    MeshTooCoarse = 10,
    PoleEncountered = 11,
    OutsideValidityStrip = 12,
    Degenerate = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

impl From<&GeoflowError> for GeoflowStatus {
    fn from(e: &GeoflowError) -> Self {
        match e {
            GeoflowError::PointOutsideChart { .. } | GeoflowError::PointTooCloseToBoundary { .. } => {
                GeoflowStatus::PointOutsideChart
            }
            GeoflowError::NonPositiveDefinite { .. } => GeoflowStatus::NonPositiveDefinite,
            GeoflowError::InvalidMetric(_) => GeoflowStatus::InvalidMetric,
            GeoflowError::UnknownCustomMetric(_) => GeoflowStatus::UnknownCustomMetric,
            GeoflowError::StepSizeUnderflow { .. }
            | GeoflowError::ToleranceNotAchieved { .. }
            | GeoflowError::LeftAtlas { .. } => GeoflowStatus::IntegrationFailed,
            GeoflowError::NotUnitSpeed { .. } => GeoflowStatus::NotUnitSpeed,
            GeoflowError::ResolutionTooCoarse(_) => GeoflowStatus::ResolutionTooCoarse,
            GeoflowError::MeshTooCoarse { .. } => GeoflowStatus::MeshTooCoarse,
            GeoflowError::PoleEncountered { .. } => GeoflowStatus::PoleEncountered,
            GeoflowError::OutsideValidityStrip { .. } => GeoflowStatus::OutsideValidityStrip,
            GeoflowError::InvalidInput(_) => GeoflowStatus::InvalidInput,
            GeoflowError::Degenerate(_) => GeoflowStatus::Degenerate,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GeoflowStatus, msg: impl Into<String>) -> GeoflowStatus {
    set_error(msg.into());
    status
}

fn from_err(e: GeoflowError) -> GeoflowStatus {
    let status = GeoflowStatus::from(&e);
    set_error(e.to_string());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), GeoflowStatus>) -> GeoflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GeoflowStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(GeoflowStatus::Panic, "internal panic"),
    }
}

fn null() -> GeoflowStatus {
    fail(GeoflowStatus::NullPointer, "null pointer argument")
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, GeoflowStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_mut<'a, T>(p: *mut T) -> Result<&'a mut T, GeoflowStatus> {
    p.as_mut().ok_or_else(null)
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], GeoflowStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// A point in chart coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoflowPoint {
    pub chart: u32,
    pub u: f64,
    pub v: f64,
}

/// A tangent vector in chart components, attached to a point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoflowPhasePoint {
    pub base: GeoflowPoint,
    pub du: f64,
    pub dv: f64,
}

impl From<GeoflowPoint> for SurfacePoint {
    fn from(p: GeoflowPoint) -> Self {
        SurfacePoint::new(p.chart as usize, p.u, p.v)
    }
}

impl From<SurfacePoint> for GeoflowPoint {
    fn from(p: SurfacePoint) -> Self {
        GeoflowPoint {
            chart: p.chart as u32,
            u: p.coords[0],
            v: p.coords[1],
        }
    }
}

impl From<GeoflowPhasePoint> for PhasePoint {
    fn from(p: GeoflowPhasePoint) -> Self {
        PhasePoint::new(p.base.into(), [p.du, p.dv])
    }
}

impl From<PhasePoint> for GeoflowPhasePoint {
    fn from(p: PhasePoint) -> Self {
        GeoflowPhasePoint {
            base: p.base.into(),
            du: p.velocity[0],
            dv: p.velocity[1],
        }
    }
}

/// Opaque surface metric.
pub struct GeoflowMetric {
    inner: SurfaceMetric,
}

/// Opaque curvature profile along a complexified geodesic.
pub struct GeoflowProfile {
    inner: CurvatureProfile,
}

/// Opaque growth series.
pub struct GeoflowSeries {
    inner: GrowthSeries,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoflowMethod {
    Mane = 0,
    JacobiDet = 1,
    Spanning = 2,
}

impl From<GeoflowMethod> for Method {
    fn from(m: GeoflowMethod) -> Self {
        match m {
            GeoflowMethod::Mane => Method::Mane,
            GeoflowMethod::JacobiDet => Method::JacobiDet,
            GeoflowMethod::Spanning => Method::Spanning,
        }
    }
}

/// Fitted growth rate. `exponential` is nonzero when the series was
/// classified as exponential; `degree` is then meaningless.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoflowEntropyEstimate {
    pub h: f64,
    pub ci: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub exponential: u8,
    pub degree: u32,
    pub raw_slope: f64,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn geoflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded.
///
/// # Safety
/// The pointer is valid until the next `geoflow_*` call on the same thread.
#[no_mangle]
pub unsafe extern "C" fn geoflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a metric from its JSON description, e.g.
/// `{"kind":"ellipsoid","params":{"a":[0.8,1.0,1.25]}}`. Custom names
/// resolve against the built-in registry.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn geoflow_metric_from_json(json: *const c_char, out: *mut *mut GeoflowMetric) -> GeoflowStatus {
    guard(|| {
        let out = as_mut(out)?;
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(GeoflowStatus::InvalidInput, "metric JSON is not UTF-8"))?;
        let spec = MetricSpec::from_json(text).map_err(from_err)?;
        let inner = spec.build(&MetricRegistry::with_builtins()).map_err(from_err)?;
        *out = Box::into_raw(Box::new(GeoflowMetric { inner }));
        Ok(())
    })
}

/// # Safety
/// `metric` must come from `geoflow_metric_from_json` or be null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_metric_free(metric: *mut GeoflowMetric) {
    if !metric.is_null() {
        drop(Box::from_raw(metric));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_metric_area(metric: *const GeoflowMetric, out: *mut f64) -> GeoflowStatus {
    guard(|| {
        *as_mut(out)? = as_ref(metric)?.inner.area();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_gauss_curvature(
    metric: *const GeoflowMetric,
    p: GeoflowPoint,
    out: *mut f64,
) -> GeoflowStatus {
    guard(|| {
        let k = as_ref(metric)?.inner.gauss_curvature(&p.into()).map_err(from_err)?;
        *as_mut(out)? = k;
        Ok(())
    })
}

/// Unit tangent vector at `p` making angle `angle` with the first
/// coordinate direction.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_unit_vector(
    metric: *const GeoflowMetric,
    p: GeoflowPoint,
    angle: f64,
    out: *mut GeoflowPhasePoint,
) -> GeoflowStatus {
    guard(|| {
        let m = &as_ref(metric)?.inner;
        let out = as_mut(out)?;
        let p: SurfacePoint = p.into();
        m.metric_eval(&p).map_err(from_err)?;
        *out = PhasePoint::unit(m, p, angle).into();
        Ok(())
    })
}

/// Follows the unit-speed geodesic from `start` for arc length `length`.
/// `energy_drift` may be null.
///
/// # Safety
/// Pointers must be valid; `energy_drift` may be null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_geodesic_endpoint(
    metric: *const GeoflowMetric,
    start: GeoflowPhasePoint,
    length: f64,
    tol: f64,
    out: *mut GeoflowPhasePoint,
    energy_drift: *mut f64,
) -> GeoflowStatus {
    guard(|| {
        let m = &as_ref(metric)?.inner;
        let out = as_mut(out)?;
        let arc = integrate_geodesic(m, &start.into(), length, tol).map_err(from_err)?;
        *out = arc.end.into();
        if let Some(d) = energy_drift.as_mut() {
            *d = arc.energy_drift;
        }
        Ok(())
    })
}

/// Volume of the image of the vertical plane under the flow differential.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_vertical_determinant(
    metric: *const GeoflowMetric,
    state: GeoflowPhasePoint,
    time: f64,
    out: *mut f64,
) -> GeoflowStatus {
    guard(|| {
        let m = &as_ref(metric)?.inner;
        let v = vertical_determinant(m, &state.into(), time, 1e-10).map_err(from_err)?;
        *as_mut(out)? = v;
        Ok(())
    })
}

/// Counts geodesic arcs of length at most `horizon` from `x` to `y`.
/// `directions == 0` selects the default fan. Up to `capacity` arc lengths
/// are copied into `lengths` (which may be null when `capacity` is 0);
/// `n_lengths` receives the total number found. `count` includes the
/// zero-length arc when `x == y`; `lengths` does not.
///
/// A degenerate target (e.g. a conjugate point) yields
/// `GEOFLOW_STATUS_DEGENERATE` with `count` still filled in.
///
/// # Safety
/// Pointers must be valid; `lengths` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn geoflow_count_geodesics(
    metric: *const GeoflowMetric,
    x: GeoflowPoint,
    y: GeoflowPoint,
    horizon: f64,
    directions: usize,
    count: *mut usize,
    lengths: *mut f64,
    capacity: usize,
    n_lengths: *mut usize,
) -> GeoflowStatus {
    guard(|| {
        let m = &as_ref(metric)?.inner;
        let count = as_mut(count)?;
        let n_lengths = as_mut(n_lengths)?;
        if capacity > 0 && lengths.is_null() {
            return Err(null());
        }
        let mut settings = CountSettings::default();
        if directions > 0 {
            settings.directions = directions;
        }
        let res = count_geodesics(m, &x.into(), &y.into(), horizon, settings).map_err(from_err)?;
        *count = res.count;
        *n_lengths = res.lengths.len();
        let n = res.lengths.len().min(capacity);
        if n > 0 {
            std::slice::from_raw_parts_mut(lengths, n).copy_from_slice(&res.lengths[..n]);
        }
        if res.degenerate {
            return Err(fail(
                GeoflowStatus::Degenerate,
                "target is conjugate or on a multiple arc",
            ));
        }
        Ok(())
    })
}

/// Series from caller-supplied data.
///
/// # Safety
/// `horizons` and `values` must each hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_series_new(
    method: GeoflowMethod,
    horizons: *const f64,
    values: *const f64,
    n: usize,
    out: *mut *mut GeoflowSeries,
) -> GeoflowStatus {
    guard(|| {
        let out = as_mut(out)?;
        *out = ptr::null_mut();
        let h = slice(horizons, n)?.to_vec();
        let v = slice(values, n)?.to_vec();
        let inner = GrowthSeries::new(method.into(), h, v).map_err(from_err)?;
        *out = Box::into_raw(Box::new(GeoflowSeries { inner }));
        Ok(())
    })
}

/// Phase-volume growth series by quasi-random sampling of the unit
/// tangent bundle.
///
/// # Safety
/// `horizons` must hold `n` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_jacobi_det_series(
    metric: *const GeoflowMetric,
    horizons: *const f64,
    n: usize,
    samples: usize,
    seed: u64,
    out: *mut *mut GeoflowSeries,
) -> GeoflowStatus {
    guard(|| {
        let out = as_mut(out)?;
        *out = ptr::null_mut();
        let m = &as_ref(metric)?.inner;
        let h = slice(horizons, n)?;
        let inner = jacobi_det_series(m, h, samples, seed).map_err(from_err)?;
        *out = Box::into_raw(Box::new(GeoflowSeries { inner }));
        Ok(())
    })
}

/// # Safety
/// `series` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_series_len(series: *const GeoflowSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.values.len())
}

/// Copies up to `capacity` values; returns `BUFFER_TOO_SMALL` if the series
/// is longer.
///
/// # Safety
/// `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn geoflow_series_values(
    series: *const GeoflowSeries,
    out: *mut f64,
    capacity: usize,
) -> GeoflowStatus {
    guard(|| {
        let s = &as_ref(series)?.inner;
        let n = s.values.len();
        if capacity < n {
            return Err(fail(GeoflowStatus::BufferTooSmall, format!("need room for {n} values")));
        }
        if n > 0 {
            if out.is_null() {
                return Err(null());
            }
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(&s.values);
        }
        Ok(())
    })
}

/// # Safety
/// `series` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_series_free(series: *mut GeoflowSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_fit_entropy(
    series: *const GeoflowSeries,
    out: *mut GeoflowEntropyEstimate,
) -> GeoflowStatus {
    guard(|| {
        let s = &as_ref(series)?.inner;
        let out = as_mut(out)?;
        let e = fit_entropy(s).map_err(from_err)?;
        let (exponential, degree) = match e.growth_class {
            GrowthClass::Polynomial { degree } => (0, degree),
            GrowthClass::Exponential { .. } => (1, 0),
        };
        *out = GeoflowEntropyEstimate {
            h: e.h,
            ci: e.ci,
            window_lo: e.fit_window.0,
            window_hi: e.fit_window.1,
            exponential,
            degree,
            raw_slope: e.raw_slope,
        };
        Ok(())
    })
}

/// Constant curvature `k`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_profile_constant(k: f64, out: *mut *mut GeoflowProfile) -> GeoflowStatus {
    guard(|| {
        let out = as_mut(out)?;
        if !k.is_finite() {
            return Err(fail(GeoflowStatus::InvalidInput, "curvature must be finite"));
        }
        *out = Box::into_raw(Box::new(GeoflowProfile {
            inner: CurvatureProfile::constant(k),
        }));
        Ok(())
    })
}

/// Chebyshev fit of the curvature along the geodesic through `state`,
/// over arc lengths `[-half_length, half_length]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_profile_along_geodesic(
    metric: *const GeoflowMetric,
    state: GeoflowPhasePoint,
    half_length: f64,
    degree: usize,
    out: *mut *mut GeoflowProfile,
) -> GeoflowStatus {
    guard(|| {
        let out = as_mut(out)?;
        *out = ptr::null_mut();
        let m = &as_ref(metric)?.inner;
        let inner = CurvatureProfile::along_geodesic(m, &state.into(), half_length, degree).map_err(from_err)?;
        *out = Box::into_raw(Box::new(GeoflowProfile { inner }));
        Ok(())
    })
}

/// # Safety
/// `profile` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_profile_free(profile: *mut GeoflowProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Normal entry of `f` at `re + i im` and the smallest eigenvalue of `Im f`.
/// `min_eig` may be null.
///
/// # Safety
/// Pointers must be valid; `min_eig` may be null.
#[no_mangle]
pub unsafe extern "C" fn geoflow_f_normal(
    profile: *const GeoflowProfile,
    re: f64,
    im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
    min_eig: *mut f64,
) -> GeoflowStatus {
    guard(|| {
        let p = &as_ref(profile)?.inner;
        let out_re = as_mut(out_re)?;
        let out_im = as_mut(out_im)?;
        let s = f_matrix(p, Complex64::new(re, im)).map_err(from_err)?;
        let f = s.normal();
        *out_re = f.re;
        *out_im = f.im;
        if let Some(e) = min_eig.as_mut() {
            *e = s.im_min_eig;
        }
        Ok(())
    })
}

/// Largest `τ` such that `Im f` stays positive definite on `0 < Im z < τ`.
/// If no failure is found below `tau_max`, `radius` is `tau_max` and
/// `lower_bound` is set to 1.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn geoflow_tube_radius(
    profile: *const GeoflowProfile,
    tau_max: f64,
    tau_steps: usize,
    radius: *mut f64,
    lower_bound: *mut u8,
) -> GeoflowStatus {
    guard(|| {
        let p = &as_ref(profile)?.inner;
        let radius = as_mut(radius)?;
        let lower_bound = as_mut(lower_bound)?;
        let probe = tube_radius_probe(p, tau_max, tau_steps).map_err(from_err)?;
        match probe.radius {
            TubeRadius::Radius { tau } => {
                *radius = tau;
                *lower_bound = 0;
            }
            TubeRadius::AtLeast { tau_max } => {
                *radius = tau_max;
                *lower_bound = 1;
            }
        }
        Ok(())
    })
}
