//! JSON metric definitions `{"kind": "...", "params": {...}}` and the named
//! registry of custom metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::custom::{self, CustomMetric};
use super::{Mat2, Mat3, SurfaceMetric, Vec3};
use crate::error::{GeoflowError, Result};

fn one() -> f64 {
    1.0
}

fn identity2() -> Mat2 {
    [[1.0, 0.0], [0.0, 1.0]]
}

pub const DEFAULT_ELLIPSOID_AXES: Vec3 = [0.8, 1.0, 1.25];
pub const DEFAULT_PATERNAIN_DIRECTION: Vec3 = [1.0, 1.0, 1.0];

fn default_axes() -> Vec3 {
    DEFAULT_ELLIPSOID_AXES
}

fn default_direction() -> Vec3 {
    DEFAULT_PATERNAIN_DIRECTION
}

/// Serialisable description of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum MetricSpec {
    #[serde(alias = "sphere")]
    RoundSphere {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atlas_rotation: Option<Mat3>,
    },
    #[serde(alias = "torus")]
    FlatTorus {
        /// Columns are the lattice generators.
        #[serde(default = "identity2")]
        basis: Mat2,
    },
    Ellipsoid {
        #[serde(default = "default_axes")]
        a: Vec3,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atlas_rotation: Option<Mat3>,
    },
    Paternain {
        #[serde(default = "default_axes")]
        a: Vec3,
        eps: f64,
        #[serde(default = "default_direction")]
        r: Vec3,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atlas_rotation: Option<Mat3>,
    },
    Custom {
        name: String,
    },
}

impl MetricSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GeoflowError::InvalidMetric(format!("metric JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric spec serialises")
    }

    /// Builds the metric, resolving custom names through `registry`.
    pub fn build(&self, registry: &MetricRegistry) -> Result<SurfaceMetric> {
        let (metric, rotation) = match self {
            MetricSpec::RoundSphere { radius, atlas_rotation } => {
                (SurfaceMetric::round_sphere(*radius)?, *atlas_rotation)
            }
            MetricSpec::FlatTorus { basis } => (SurfaceMetric::flat_torus(*basis)?, None),
            MetricSpec::Ellipsoid { a, atlas_rotation } => (SurfaceMetric::ellipsoid(*a)?, *atlas_rotation),
            MetricSpec::Paternain {
                a,
                eps,
                r,
                atlas_rotation,
            } => (SurfaceMetric::paternain(*a, *eps, *r)?, *atlas_rotation),
            MetricSpec::Custom { name } => (SurfaceMetric::custom(registry.get(name)?)?, None),
        };
        let metric = match rotation {
            Some(rot) => metric.with_atlas_rotation(rot)?,
            None => metric,
        };
        Ok(metric.with_spec(self.clone()))
    }
}

/// Named custom metrics. Metrics are registered in code; JSON documents
/// refer to them by name only.
#[derive(Debug, Clone, Default)]
pub struct MetricRegistry {
    entries: BTreeMap<String, CustomMetric>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry pre-populated with the example metrics shipped with the crate.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(custom::spherical_coordinates());
        reg.register(custom::flat_periodic());
        reg.register(custom::bumpy_torus());
        reg.register(custom::corrupt_example());
        reg
    }

    pub fn register(&mut self, metric: CustomMetric) {
        self.entries.insert(metric.name.clone(), metric);
    }

    pub fn get(&self, name: &str) -> Result<CustomMetric> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| GeoflowError::UnknownCustomMetric(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
