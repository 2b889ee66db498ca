#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Numerical laboratory for geodesic flows on analytic surfaces.

pub mod adapted;
pub mod cli;
pub mod counting;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod ode;
pub mod quadrature;

pub use error::{GeoflowError, Result};
pub use geometry::{MetricRegistry, MetricSpec, SurfaceMetric, SurfacePoint};
