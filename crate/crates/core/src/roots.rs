//! Bracketed root finding: bisection and Brent's method.

use crate::error::{Result, ZsError};

const MAX_ITER: usize = 200;

fn check_bracket(a: f64, b: f64, fa: f64, fb: f64) -> Result<()> {
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(ZsError::NoBracket { a, b });
    }
    Ok(())
}

/// Smallest width worth resolving: `xtol`, floored at a few ulps.
fn floor_tol(xtol: f64, a: f64, b: f64) -> f64 {
    xtol.max(2.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0))
}

/// Root of `f` in `[a, b]`, where `f(a)` and `f(b)` are known and of opposite sign.
///
/// Halving continues until the interval is no wider than `xtol` (floored at
/// a few ulps of `max(1, |a|, |b|)`) or the midpoint coincides with an
/// endpoint in floating point. Returns the endpoint with the smaller `|f|`.
pub fn bisect_with<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    check_bracket(a, b, fa, fb)?;
    let (mut lo, mut hi, mut flo, mut fhi) = (a, b, fa, fb);
    let xtol = floor_tol(xtol, a, b);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Ok(if flo.abs() <= fhi.abs() { lo } else { hi });
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Err(ZsError::NoConvergence { iterations: MAX_ITER })
}

pub fn bisect<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    bisect_with(f, a, b, fa, fb, xtol)
}

/// Brent's method (inverse quadratic interpolation, secant, bisection) on a
/// known sign-change bracket. Same tolerance convention as [`bisect_with`].
pub fn brent_with<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    check_bracket(a, b, fa, fb)?;
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 0.5 * floor_tol(xtol, b, c);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut qq);
            if a == c {
                p = 2.0 * m * s;
                qq = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                qq = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                qq = -qq;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * qq - (tol * qq).abs()).min((e * qq).abs()) {
                e = d;
                d = p / qq;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(ZsError::NoConvergence { iterations: MAX_ITER })
}

pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    brent_with(f, a, b, fa, fb, xtol)
}
