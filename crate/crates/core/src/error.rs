use thiserror::Error;

/// Errors produced by the geodesic-flow machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoflowError {
    #[error("point outside chart {chart}: ({u}, {v})")]
    PointOutsideChart { chart: usize, u: f64, v: f64 },

    #[error("metric tensor is not positive definite at chart {chart} ({u}, {v}): E={e}, F={f}, G={g}")]
    NonPositiveDefinite {
        chart: usize,
        u: f64,
        v: f64,
        e: f64,
        f: f64,
        g: f64,
    },

    #[error("point too close to chart boundary for differentiation step {step}")]
    PointTooCloseToBoundary { step: f64 },

    #[error("invalid metric parameters: {0}")]
    InvalidMetric(String),

    #[error("unknown custom metric '{0}' (not in registry)")]
    UnknownCustomMetric(String),

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("tolerance not achieved after {steps} steps at t = {t}")]
    ToleranceNotAchieved { t: f64, steps: usize },

    #[error("trajectory left the chart atlas at t = {t}")]
    LeftAtlas { t: f64 },

    #[error("phase point is not on the unit sphere bundle: |v|^2 = {speed_sq}")]
    NotUnitSpeed { speed_sq: f64 },

    #[error("angular resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("mesh too coarse: covering radius {radius} exceeds eps/4 = {limit}")]
    MeshTooCoarse { radius: f64, limit: f64 },

    #[error("pole of f encountered at z = {re} + {im}i")]
    PoleEncountered { re: f64, im: f64 },

    #[error("z = {re} + {im}i lies outside the validity strip of the curvature profile")]
    OutsideValidityStrip { re: f64, im: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl GeoflowError {
    /// Short machine-readable name used in reports and by the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            GeoflowError::PointOutsideChart { .. } => "point-outside-chart",
            GeoflowError::NonPositiveDefinite { .. } => "non-positive-definite",
            GeoflowError::PointTooCloseToBoundary { .. } => "point-too-close-to-chart-boundary",
            GeoflowError::InvalidMetric(_) => "invalid-metric",
            GeoflowError::UnknownCustomMetric(_) => "unknown-custom-metric",
            GeoflowError::StepSizeUnderflow { .. } => "step-size-underflow",
            GeoflowError::ToleranceNotAchieved { .. } => "tolerance-not-achieved",
            GeoflowError::LeftAtlas { .. } => "left-atlas",
            GeoflowError::NotUnitSpeed { .. } => "not-unit-speed",
            GeoflowError::ResolutionTooCoarse(_) => "resolution-too-coarse",
            GeoflowError::MeshTooCoarse { .. } => "mesh-too-coarse",
            GeoflowError::PoleEncountered { .. } => "pole-encountered",
            GeoflowError::OutsideValidityStrip { .. } => "outside-validity-strip",
            GeoflowError::InvalidInput(_) => "invalid-input",
            GeoflowError::Degenerate(_) => "degenerate",
        }
    }
}

pub type Result<T> = std::result::Result<T, GeoflowError>;
