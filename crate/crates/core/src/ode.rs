//! Adaptive Dormand–Prince 5(4) stepper over a flat `f64` state.
//!
//! The stepper only advances one accepted step at a time; the caller owns
//! the loop so it can apply chart transitions and renormalisation between
//! steps without the integrator knowing about manifolds.

use crate::error::{GeoflowError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order weights minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_init: 1e-2,
            h_max: 0.25,
            max_steps: 5_000_000,
        }
    }
}

/// Dormand–Prince 5(4) stepper with persistent workspace.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    ctl: StepControl,
    h: f64,
    steps: usize,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Dopri5 {
    pub fn new(dim: usize, ctl: StepControl) -> Self {
        Self {
            ctl,
            h: ctl.h_init.min(ctl.h_max),
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advances `y` from `t` by one accepted step that does not pass `t_end`.
    /// Returns the new time. A right-hand side error is treated as a
    /// rejected step and retried with a smaller step.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, y: &mut [f64], t_end: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        let remaining = t_end - t;
        if remaining <= 0.0 {
            return Ok(t);
        }
        let h_floor = 1e-14 * (1.0 + t.abs());
        loop {
            if self.steps >= self.ctl.max_steps {
                return Err(GeoflowError::ToleranceNotAchieved { t, steps: self.steps });
            }
            let mut h = self.h.min(self.ctl.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            match self.attempt(rhs, t, y, h) {
                Ok(err) if err <= 1.0 => {
                    y.copy_from_slice(&self.y_new[..n]);
                    self.steps += 1;
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    // Clipped final steps must not shrink the controller's step.
                    if !last || fac * h > self.h {
                        self.h = (h * fac).min(self.ctl.h_max);
                    }
                    return Ok(if last { t_end } else { t + h });
                }
                Ok(err) => {
                    self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                Err(_) => {
                    self.h = 0.25 * h;
                }
            }
            if self.h < h_floor {
                return Err(GeoflowError::StepSizeUnderflow { t, h: self.h });
            }
        }
    }

    fn attempt<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let s = &mut self.stage;
        rhs(t, y, k1)?;
        for i in 0..n {
            s[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, s, k2)?;
        for i in 0..n {
            s[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, s, k3)?;
        for i in 0..n {
            s[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, s, k4)?;
        for i in 0..n {
            s[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, s, k5)?;
        for i in 0..n {
            s[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, s, k6)?;
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, y_new, k7)?;
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.ctl.atol + self.ctl.rtol * y[i].abs().max(y_new[i].abs());
            acc += (e / sc).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            return Err(GeoflowError::InvalidInput("non-finite state".into()));
        }
        Ok(err)
    }
}

/// Integrates `rhs` from `t0` to `t1` without intermediate hooks.
pub fn integrate<F>(mut rhs: F, t0: f64, t1: f64, y: &mut [f64], ctl: StepControl) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut stepper = Dopri5::new(y.len(), ctl);
    let mut t = t0;
    while t < t1 {
        t = stepper.step(&mut rhs, t, y, t1)?;
    }
    Ok(())
}
