//! Closed-form jets of surfaces embedded in R^3 through a pair of
//! stereographic charts.
//!
//! Chart 0 is the stereographic chart of the unit sphere projecting from the
//! south pole, chart 1 is the same chart composed with the half-turn about
//! the x-axis. The transition map `w = (u1, -u2) / |u|^2` is an
//! orientation-preserving involution. The unit sphere is then rotated by the
//! atlas rotation and stretched by the semi-axes.

/// Coordinate radius of each chart domain.
pub const DOMAIN_RADIUS: f64 = 2.0;
/// Trajectories move to the other chart past this radius (80% of the domain).
pub const SWITCH_RADIUS: f64 = 0.8 * DOMAIN_RADIUS;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Position with first and second coordinate derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub x: Vec3,
    pub d: [Vec3; 2],
    pub dd: [[Vec3; 2]; 2],
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn mat_t_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

/// Checks that `m` is a rotation (orthonormal, det +1) to 1e-9.
pub fn is_rotation(m: &Mat3) -> bool {
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot(&m[i], &m[j]) - want).abs() > 1e-9 {
                return false;
            }
        }
    }
    (dot(&m[0], &cross(&m[1], &m[2])) - 1.0).abs() < 1e-9
}

/// Stereographic parametrisation of the unit sphere and its derivatives.
fn stereo_jet(u: [f64; 2]) -> Jet {
    let r2 = u[0] * u[0] + u[1] * u[1];
    let d = 1.0 + r2;
    let d2 = d * d;
    let d3 = d2 * d;
    let x = [2.0 * u[0] / d, 2.0 * u[1] / d, (1.0 - r2) / d];
    let mut dv = [[0.0; 3]; 2];
    let mut ddv = [[[0.0; 3]; 2]; 2];
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for j in 0..2 {
        for k in 0..2 {
            dv[j][k] = 2.0 * delta(j, k) / d - 4.0 * u[k] * u[j] / d2;
        }
        dv[j][2] = -4.0 * u[j] / d2;
    }
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                ddv[i][j][k] = -4.0 * (delta(j, k) * u[i] + delta(i, k) * u[j] + delta(i, j) * u[k]) / d2
                    + 16.0 * u[i] * u[j] * u[k] / d3;
            }
            ddv[i][j][2] = -4.0 * delta(i, j) / d2 + 16.0 * u[i] * u[j] / d3;
        }
    }
    Jet { x, d: dv, dd: ddv }
}

/// Frame for chart `chart`: rotation applied after the stereographic map.
fn chart_frame(rotation: &Mat3, chart: usize) -> Mat3 {
    if chart == 0 {
        *rotation
    } else {
        // rotation * diag(1, -1, -1)
        let mut m = *rotation;
        for row in m.iter_mut() {
            row[1] = -row[1];
            row[2] = -row[2];
        }
        m
    }
}

/// Jet of the ellipsoid `X = diag(axes) * R * s(u)` in chart `chart`.
pub fn ellipsoid_jet(axes: &Vec3, rotation: &Mat3, chart: usize, u: [f64; 2]) -> Jet {
    let frame = chart_frame(rotation, chart);
    let s = stereo_jet(u);
    let map = |v: &Vec3| {
        let w = mat_vec(&frame, v);
        [axes[0] * w[0], axes[1] * w[1], axes[2] * w[2]]
    };
    Jet {
        x: map(&s.x),
        d: [map(&s.d[0]), map(&s.d[1])],
        dd: [
            [map(&s.dd[0][0]), map(&s.dd[0][1])],
            [map(&s.dd[1][0]), map(&s.dd[1][1])],
        ],
    }
}

/// Chart coordinates of an ambient point on the ellipsoid.
pub fn ellipsoid_chart_coords(axes: &Vec3, rotation: &Mat3, chart: usize, x: &Vec3) -> [f64; 2] {
    let frame = chart_frame(rotation, chart);
    let s = mat_t_vec(&frame, &[x[0] / axes[0], x[1] / axes[1], x[2] / axes[2]]);
    let den = 1.0 + s[2];
    [s[0] / den, s[1] / den]
}

/// Transition between the two stereographic charts (same map both ways).
pub fn transition(u: [f64; 2]) -> [f64; 2] {
    let r2 = u[0] * u[0] + u[1] * u[1];
    [u[0] / r2, -u[1] / r2]
}

/// Jacobian of [`transition`] at `u`.
pub fn transition_jacobian(u: [f64; 2]) -> [[f64; 2]; 2] {
    let r2 = u[0] * u[0] + u[1] * u[1];
    let r4 = r2 * r2;
    let a = (u[1] * u[1] - u[0] * u[0]) / r4;
    let b = 2.0 * u[0] * u[1] / r4;
    [[a, -b], [b, a]]
}

/// Induced first and second fundamental forms and Levi-Civita data.
#[derive(Debug, Clone, Copy)]
pub struct InducedGeometry {
    pub g: [[f64; 2]; 2],
    pub ginv: [[f64; 2]; 2],
    pub gamma: [[[f64; 2]; 2]; 2],
    pub curvature: f64,
}

pub fn induced(jet: &Jet) -> InducedGeometry {
    let mut g = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = dot(&jet.d[i], &jet.d[j]);
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let ginv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
    // first-kind symbols [ij, l] = X_ij . X_l
    let mut first = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for l in 0..2 {
                first[i][j][l] = dot(&jet.dd[i][j], &jet.d[l]);
            }
        }
    }
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                gamma[k][i][j] = ginv[k][0] * first[i][j][0] + ginv[k][1] * first[i][j][1];
            }
        }
    }
    let n = cross(&jet.d[0], &jet.d[1]);
    let nn = norm(&n);
    let nu = [n[0] / nn, n[1] / nn, n[2] / nn];
    let l = dot(&jet.dd[0][0], &nu);
    let m = dot(&jet.dd[0][1], &nu);
    let nn2 = dot(&jet.dd[1][1], &nu);
    let curvature = (l * nn2 - m * m) / det;
    InducedGeometry {
        g,
        ginv,
        gamma,
        curvature,
    }
}

/// Scalar conformal factor `(1 - eps r.x) / (a1 a2 a3 sum x_i^2 / a_i^2)`
/// with its ambient gradient and Hessian.
pub struct ConformalFactor {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
}

pub fn paternain_factor(a: &Vec3, eps: f64, r: &Vec3, x: &Vec3) -> ConformalFactor {
    let prod = a[0] * a[1] * a[2];
    let num = 1.0 - eps * dot(r, x);
    let grad_num = [-eps * r[0], -eps * r[1], -eps * r[2]];
    let q: f64 = (0..3).map(|i| x[i] * x[i] / (a[i] * a[i])).sum();
    let den = prod * q;
    let grad_den = [
        2.0 * prod * x[0] / (a[0] * a[0]),
        2.0 * prod * x[1] / (a[1] * a[1]),
        2.0 * prod * x[2] / (a[2] * a[2]),
    ];
    let value = num / den;
    let mut grad = [0.0; 3];
    for i in 0..3 {
        grad[i] = grad_num[i] / den - num * grad_den[i] / (den * den);
    }
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let hden = if i == j { 2.0 * prod / (a[i] * a[i]) } else { 0.0 };
            hess[i][j] = -(grad_num[i] * grad_den[j] + grad_den[i] * grad_num[j]) / (den * den)
                - num * hden / (den * den)
                + 2.0 * num * grad_den[i] * grad_den[j] / (den * den * den);
        }
    }
    ConformalFactor { value, grad, hess }
}

/// Geometry of `c(X) * g_E` from the induced geometry of the embedding and
/// the ambient jet of the factor.
pub fn conformal(jet: &Jet, base: &InducedGeometry, factor: &ConformalFactor) -> InducedGeometry {
    let c = factor.value;
    // w = ln(c) / 2
    let mut dw = [0.0; 2];
    for i in 0..2 {
        dw[i] = dot(&factor.grad, &jet.d[i]) / (2.0 * c);
    }
    let mut ddw = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let hx = mat_vec(&factor.hess, &jet.d[j]);
            let dci = dot(&factor.grad, &jet.d[i]);
            let dcj = dot(&factor.grad, &jet.d[j]);
            let ddc = dot(&jet.d[i], &hx) + dot(&factor.grad, &jet.dd[i][j]);
            ddw[i][j] = (ddc * c - dci * dcj) / (2.0 * c * c);
        }
    }
    let mut lap = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let cov = ddw[i][j] - base.gamma[0][i][j] * dw[0] - base.gamma[1][i][j] * dw[1];
            lap += base.ginv[i][j] * cov;
        }
    }
    let grad_up = [
        base.ginv[0][0] * dw[0] + base.ginv[0][1] * dw[1],
        base.ginv[1][0] * dw[0] + base.ginv[1][1] * dw[1],
    ];
    let mut gamma = base.gamma;
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut add = -base.g[i][j] * grad_up[k];
                if k == i {
                    add += dw[j];
                }
                if k == j {
                    add += dw[i];
                }
                gamma[k][i][j] += add;
            }
        }
    }
    let mut g = base.g;
    let mut ginv = base.ginv;
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] *= c;
            ginv[i][j] /= c;
        }
    }
    InducedGeometry {
        g,
        ginv,
        gamma,
        curvature: (base.curvature - lap) / c,
    }
}
