//! Explicit adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! The step-size sequence depends only on the right-hand side and the
//! configuration, so repeated integrations are bit-identical. State updates
//! use compensated summation, which keeps the accumulated rounding error
//! near one ulp over long step sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsError};

/// Tolerances and step budget for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_steps: 200_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(ZsError::Config("ODE tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(ZsError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Final state of an integration.
#[derive(Debug, Clone, Copy)]
pub struct OdeOutcome<const D: usize> {
    pub y: [f64; D],
    pub steps: usize,
    pub rejected: usize,
    /// Sum over accepted steps of the max-norm local error estimate.
    pub est_error: f64,
}

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

// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn scaled_norm<const D: usize>(v: &[f64; D], y: &[f64; D], cfg: &IntegratorConfig) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        let r = v[i] / sc;
        s += r * r;
    }
    (s / D as f64).sqrt()
}

/// Hairer's starting-step heuristic.
fn initial_step<const D: usize, F>(
    f: &mut F,
    t0: f64,
    y0: &[f64; D],
    f0: &[f64; D],
    span: f64,
    cfg: &IntegratorConfig,
) -> f64
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let d0 = scaled_norm(y0, y0, cfg);
    let d1 = scaled_norm(f0, y0, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(t0 + h0, &y1);
    let mut diff = [0.0; D];
    for i in 0..D {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = scaled_norm(&diff, y0, cfg) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

struct Step<const D: usize> {
    y: [f64; D],
    comp: [f64; D],
    k7: [f64; D],
    err: [f64; D],
}

/// One Dormand–Prince step from `t` to `t_end = t + h` with compensated update.
#[inline]
fn dp_step<const D: usize, F>(f: &mut F, t: f64, t_end: f64, y: &[f64; D], comp: &[f64; D], k1: &[f64; D]) -> Step<D>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let h = t_end - t;
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t_end,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let mut y_new = [0.0; D];
    let mut comp_new = [0.0; D];
    for i in 0..D {
        let incr = h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]) - comp[i];
        let sum = y[i] + incr;
        comp_new[i] = (sum - y[i]) - incr;
        y_new[i] = sum;
    }
    let k7 = f(t_end, &y_new);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Step {
        y: y_new,
        comp: comp_new,
        k7,
        err,
    }
}

fn max_abs<const D: usize>(v: &[f64; D]) -> f64 {
    v.iter().fold(0.0f64, |m, e| m.max(e.abs()))
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn integrate<const D: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; D],
    cfg: &IntegratorConfig,
) -> Result<OdeOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    integrate_inner(f, t0, t1, y0, cfg, None)
}

/// As [`integrate`], also returning the accepted mesh `t0 < t_1 < … < t1`.
pub fn integrate_recorded<const D: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; D],
    cfg: &IntegratorConfig,
) -> Result<(OdeOutcome<D>, Vec<f64>)>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let mut mesh = vec![t0];
    let out = integrate_inner(f, t0, t1, y0, cfg, Some(&mut mesh))?;
    Ok((out, mesh))
}

fn integrate_inner<const D: usize, F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; D],
    cfg: &IntegratorConfig,
    mut mesh: Option<&mut Vec<f64>>,
) -> Result<OdeOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut comp = [0.0; D];
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t0, &y, &k1, span, cfg);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut est_error = 0.0;

    while t < t1 {
        if steps + rejected >= cfg.max_steps {
            return Err(ZsError::Integration { x: t, steps, est_error });
        }
        let last = t + h >= t1;
        let t_end = if last { t1 } else { t + h };
        let step = dp_step(&mut f, t, t_end, &y, &comp, &k1);

        let mut s = 0.0;
        for i in 0..D {
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(step.y[i].abs());
            s += (step.err[i] / sc) * (step.err[i] / sc);
        }
        let err_norm = (s / D as f64).sqrt();
        if !err_norm.is_finite() {
            return Err(ZsError::Integration { x: t, steps, est_error });
        }

        if err_norm <= 1.0 {
            t = t_end;
            y = step.y;
            comp = step.comp;
            k1 = step.k7;
            steps += 1;
            est_error += max_abs(&step.err);
            if let Some(m) = mesh.as_deref_mut() {
                m.push(t);
            }
            let fac = if err_norm == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            h *= fac;
        } else {
            rejected += 1;
            h *= (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, 1.0);
            if h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(ZsError::Integration { x: t, steps, est_error });
            }
        }
    }
    Ok(OdeOutcome {
        y,
        steps,
        rejected,
        est_error,
    })
}

/// Replays a fixed mesh (as returned by [`integrate_recorded`]) without step
/// control. The result is then a smooth function of any parameter in `f`.
pub fn integrate_on_mesh<const D: usize, F>(mut f: F, mesh: &[f64], y0: [f64; D]) -> OdeOutcome<D>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let mut y = y0;
    let mut comp = [0.0; D];
    let mut est_error = 0.0;
    let Some(&t0) = mesh.first() else {
        return OdeOutcome {
            y,
            steps: 0,
            rejected: 0,
            est_error,
        };
    };
    let mut k1 = f(t0, &y);
    for w in mesh.windows(2) {
        let step = dp_step(&mut f, w[0], w[1], &y, &comp, &k1);
        y = step.y;
        comp = step.comp;
        k1 = step.k7;
        est_error += max_abs(&step.err);
    }
    OdeOutcome {
        y,
        steps: mesh.len().saturating_sub(1),
        rejected: 0,
        est_error,
    }
}
