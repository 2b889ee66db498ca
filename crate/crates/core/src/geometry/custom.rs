//! User-supplied metrics on a single rectangular chart.
//!
//! Derivatives of the coefficient functions are taken with central
//! differences plus one Richardson level.

use std::fmt;
use std::sync::Arc;

use crate::error::{GeoflowError, Result};

/// Coefficients `[E, F, G]` of the metric at chart coordinates `(u, v)`.
pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> [f64; 3] + Send + Sync>;

/// A metric given by coefficient functions on a rectangle, optionally
/// periodic in either coordinate.
#[derive(Clone)]
pub struct CustomMetric {
    pub name: String,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub periodic: [bool; 2],
    pub coefficients: CoefficientFn,
}

impl fmt::Debug for CustomMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMetric")
            .field("name", &self.name)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("periodic", &self.periodic)
            .finish()
    }
}

/// Relative step for first derivatives (fraction of the chart diameter).
pub const FIRST_STEP: f64 = 1e-5;
/// Relative outer step for the derivatives of the Christoffel symbols.
pub const SECOND_STEP: f64 = 1e-3;

impl CustomMetric {
    pub fn new<F>(name: &str, lo: [f64; 2], hi: [f64; 2], periodic: [bool; 2], coefficients: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 3] + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            lo,
            hi,
            periodic,
            coefficients: Arc::new(coefficients),
        }
    }

    pub fn diameter(&self) -> f64 {
        ((self.hi[0] - self.lo[0]).powi(2) + (self.hi[1] - self.lo[1]).powi(2)).sqrt()
    }

    pub fn metric(&self, u: [f64; 2]) -> [[f64; 2]; 2] {
        let [e, f, g] = (self.coefficients)(u[0], u[1]);
        [[e, f], [f, g]]
    }

    fn margin_ok(&self, u: [f64; 2], margin: f64) -> bool {
        (0..2).all(|i| self.periodic[i] || (u[i] - margin >= self.lo[i] && u[i] + margin <= self.hi[i]))
    }

    /// Derivative of the metric along coordinate `axis`.
    fn metric_derivative(&self, u: [f64; 2], axis: usize, h: f64) -> [[f64; 2]; 2] {
        let central = |step: f64| {
            let mut up = u;
            let mut um = u;
            up[axis] += step;
            um[axis] -= step;
            let (a, b) = (self.metric(up), self.metric(um));
            let mut d = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    d[i][j] = (a[i][j] - b[i][j]) / (2.0 * step);
                }
            }
            d
        };
        richardson(central(h), central(0.5 * h))
    }

    pub fn christoffel(&self, u: [f64; 2]) -> Result<[[[f64; 2]; 2]; 2]> {
        let h = FIRST_STEP * self.diameter();
        if !self.margin_ok(u, h) {
            return Err(GeoflowError::PointTooCloseToBoundary { step: h });
        }
        Ok(self.christoffel_unchecked(u, h))
    }

    /// Christoffel symbols without the boundary-margin check.
    pub fn christoffel_raw(&self, u: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        self.christoffel_unchecked(u, FIRST_STEP * self.diameter())
    }

    fn christoffel_unchecked(&self, u: [f64; 2], h: f64) -> [[[f64; 2]; 2]; 2] {
        let g = self.metric(u);
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let ginv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let dg = [self.metric_derivative(u, 0, h), self.metric_derivative(u, 1, h)];
        let mut gamma = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for l in 0..2 {
                        acc += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                    }
                    gamma[k][i][j] = 0.5 * acc;
                }
            }
        }
        // exact lower-index symmetry
        for k in 0..2 {
            let s = 0.5 * (gamma[k][0][1] + gamma[k][1][0]);
            gamma[k][0][1] = s;
            gamma[k][1][0] = s;
        }
        gamma
    }

    pub fn gauss_curvature(&self, u: [f64; 2]) -> Result<f64> {
        let outer = SECOND_STEP * self.diameter();
        if !self.margin_ok(u, outer * 1.01) {
            return Err(GeoflowError::PointTooCloseToBoundary { step: outer });
        }
        Ok(self.gauss_curvature_raw(u))
    }

    /// Gaussian curvature without the boundary-margin check.
    pub fn gauss_curvature_raw(&self, u: [f64; 2]) -> f64 {
        let inner = FIRST_STEP * self.diameter();
        let outer = SECOND_STEP * self.diameter();
        let gamma = self.christoffel_unchecked(u, inner);
        let dgamma = |axis: usize| {
            let central = |step: f64| {
                let mut up = u;
                let mut um = u;
                up[axis] += step;
                um[axis] -= step;
                let (a, b) = (
                    self.christoffel_unchecked(up, inner),
                    self.christoffel_unchecked(um, inner),
                );
                let mut d = [[[0.0; 2]; 2]; 2];
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            d[k][i][j] = (a[k][i][j] - b[k][i][j]) / (2.0 * step);
                        }
                    }
                }
                d
            };
            let (c1, c2) = (central(outer), central(0.5 * outer));
            let mut d = [[[0.0; 2]; 2]; 2];
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        d[k][i][j] = (4.0 * c2[k][i][j] - c1[k][i][j]) / 3.0;
                    }
                }
            }
            d
        };
        let d1 = dgamma(0);
        let d2 = dgamma(1);
        // R^m_{212} = d_1 G^m_22 - d_2 G^m_12 + G^p_22 G^m_1p - G^p_12 G^m_2p
        let mut r = [0.0; 2];
        for m in 0..2 {
            r[m] = d1[m][1][1] - d2[m][0][1];
            for p in 0..2 {
                r[m] += gamma[p][1][1] * gamma[m][0][p] - gamma[p][0][1] * gamma[m][1][p];
            }
        }
        let g = self.metric(u);
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        (g[0][0] * r[0] + g[0][1] * r[1]) / det
    }
}

fn richardson(coarse: [[f64; 2]; 2], fine: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    out
}

/// Round sphere of radius 1 in colatitude/longitude coordinates, away from the poles.
pub fn spherical_coordinates() -> CustomMetric {
    CustomMetric::new(
        "spherical-coordinates",
        [0.05, 0.0],
        [std::f64::consts::PI - 0.05, 2.0 * std::f64::consts::PI],
        [false, true],
        |theta, _phi| [1.0, 0.0, theta.sin().powi(2)],
    )
}

/// The unit-square flat torus, re-expressed as a custom periodic metric.
pub fn flat_periodic() -> CustomMetric {
    CustomMetric::new("flat-periodic", [0.0, 0.0], [1.0, 1.0], [true, true], |_, _| {
        [1.0, 0.0, 1.0]
    })
}

/// Surface of revolution `r(u) = 1 + 0.3 cos u` over a periodic chart.
pub fn bumpy_torus() -> CustomMetric {
    let tau = 2.0 * std::f64::consts::PI;
    CustomMetric::new("bumpy-revolution", [0.0, 0.0], [tau, tau], [true, true], |u, _v| {
        let r = 2.0 + 0.5 * u.cos();
        [0.25, 0.0, r * r]
    })
}

/// A deliberately broken metric whose determinant changes sign; used to
/// exercise the validation error path.
pub fn corrupt_example() -> CustomMetric {
    CustomMetric::new("corrupt-example", [-1.0, -1.0], [1.0, 1.0], [false, false], |u, _v| {
        [1.0, 0.0, u]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spherical_christoffel_closed_form() {
        let m = spherical_coordinates();
        for theta in [0.4, 1.0, 2.2] {
            let gamma = m.christoffel([theta, 1.0]).unwrap();
            let want = -theta.sin() * theta.cos();
            assert!((gamma[0][1][1] - want).abs() <= 1e-6 * want.abs());
            let cot = theta.cos() / theta.sin();
            assert!((gamma[1][0][1] - cot).abs() <= 1e-6 * cot.abs());
            assert_eq!(gamma[1][0][1], gamma[1][1][0]);
        }
    }

    #[test]
    fn spherical_curvature_is_one() {
        let m = spherical_coordinates();
        for theta in [0.5, 1.3, 2.5] {
            let k = m.gauss_curvature([theta, 3.0]).unwrap();
            assert!((k - 1.0).abs() < 1e-6, "K = {k}");
        }
    }

    #[test]
    fn boundary_margin_is_enforced() {
        let m = spherical_coordinates();
        let err = m.christoffel([0.05, 1.0]).unwrap_err();
        assert_eq!(err.kind(), "point-too-close-to-chart-boundary");
        // periodic coordinate has no margin constraint
        assert!(m.christoffel([1.0, 0.0]).is_ok());
    }
}
