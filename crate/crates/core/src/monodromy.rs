//! Period map of the Zakharov–Shabat system `J Ψ' + Q Ψ = z Ψ` and the
//! Lyapunov function `Δ(z) = ½ Tr Ψ(1, z)` with its first two z-derivatives.
//!
//! Writing `Ψ' = M Ψ` with `M(x, z) = −J (zI − Q(x))` gives
//! `M = [[q2, −(z + q1)], [z − q1, −q2]]` and `∂_z M = −J = [[0, −1], [1, 0]]`.
//! The z-derivatives of `Ψ` are integrated alongside it (variational system),
//! twelve real unknowns in total.

use serde::Serialize;

use crate::error::Result;
use crate::ode::{integrate, integrate_on_mesh, integrate_recorded, IntegratorConfig, OdeOutcome};
use crate::potential::FourierPotential;

/// Row-major 2×2 real matrix.
pub type Mat2 = [[f64; 2]; 2];

pub fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `Ψ(1, z)` and its first two z-derivatives.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Monodromy {
    pub z: f64,
    pub psi: Mat2,
    pub d_psi: Mat2,
    pub dd_psi: Mat2,
    pub steps: usize,
    pub est_error: f64,
}

/// `Δ`, `Δ'`, `Δ''` at a real spectral point.
///
/// `disc = ((a − d)/2)² + bc` is the eigenvalue discriminant of `Ψ(1, z)`;
/// it equals `Δ² − det Ψ = Δ² − 1` but keeps full relative precision near
/// narrow gaps where `Δ² − 1` suffers cancellation. `d_disc`, `dd_disc` are
/// its z-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovValue {
    pub z: f64,
    pub delta: f64,
    pub d_delta: f64,
    pub dd_delta: f64,
    pub disc: f64,
    pub d_disc: f64,
    pub dd_disc: f64,
    pub det: f64,
    pub est_error: f64,
}

impl Monodromy {
    pub fn lyapunov(&self) -> LyapunovValue {
        let [[a, b], [c, d]] = self.psi;
        let [[a1, b1], [c1, d1]] = self.d_psi;
        let [[a2, b2], [c2, d2]] = self.dd_psi;
        let h = 0.5 * (a - d);
        let h1 = 0.5 * (a1 - d1);
        let h2 = 0.5 * (a2 - d2);
        LyapunovValue {
            z: self.z,
            delta: 0.5 * trace(&self.psi),
            d_delta: 0.5 * trace(&self.d_psi),
            dd_delta: 0.5 * trace(&self.dd_psi),
            disc: h * h + b * c,
            d_disc: 2.0 * h * h1 + b1 * c + b * c1,
            dd_disc: 2.0 * (h1 * h1 + h * h2) + b2 * c + 2.0 * b1 * c1 + b * c2,
            det: det(&self.psi),
            est_error: self.est_error,
        }
    }
}

#[inline]
fn mat_from(y: &[f64; 12], off: usize) -> Mat2 {
    [[y[off], y[off + 1]], [y[off + 2], y[off + 3]]]
}

/// Right-hand side of the augmented system at `z = base + offset`, in the
/// frame rotating with the base frequency: `Ψ(x) = R(base·x) Φ(x)` with
/// `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]`. Then
/// `Φ' = (offset·K + R(−θ) P R(θ)) Φ`, where `K = −J` and
/// `P = [[q2, −q1], [−q1, −q2]]`. No term of size `|z|` appears, so offsets far
/// below one ulp of `base` keep their full precision.
struct System<'a> {
    q: &'a FourierPotential,
    tables: crate::potential::TrigTables,
    base: f64,
    offset: f64,
}

impl System<'_> {
    fn eval(&mut self, x: f64, y: &[f64; 12]) -> [f64; 12] {
        let (q1, q2) = self.q.eval_with(&mut self.tables, x);
        let (s2, c2) = (2.0 * self.base * x).sin_cos();
        // R(−θ) P R(θ) = [[a, b], [b, −a]]
        let a = q2 * c2 - q1 * s2;
        let b = -q1 * c2 - q2 * s2;
        let (up, dn) = (b - self.offset, b + self.offset);
        let mut out = [0.0; 12];
        for blk in 0..3 {
            let off = 4 * blk;
            for j in 0..2 {
                let (x0, x1) = (y[off + j], y[off + 2 + j]);
                out[off + j] = a * x0 + up * x1;
                out[off + 2 + j] = dn * x0 - a * x1;
            }
        }
        // ∂_z: K X = [[−X10, −X11], [X00, X01]]
        for j in 0..2 {
            out[4 + j] -= y[2 + j];
            out[6 + j] += y[j];
            out[8 + j] -= 2.0 * y[6 + j];
            out[10 + j] += 2.0 * y[4 + j];
        }
        out
    }

    /// `Ψ(1) = R(base) Φ(1)` for each of the three blocks.
    fn finish(&self, out: OdeOutcome<12>) -> Monodromy {
        let (s, c) = self.base.sin_cos();
        let rot = |off: usize| -> Mat2 {
            let m = mat_from(&out.y, off);
            [
                [c * m[0][0] - s * m[1][0], c * m[0][1] - s * m[1][1]],
                [s * m[0][0] + c * m[1][0], s * m[0][1] + c * m[1][1]],
            ]
        };
        Monodromy {
            z: self.base + self.offset,
            psi: rot(0),
            d_psi: rot(4),
            dd_psi: rot(8),
            steps: out.steps,
            est_error: out.est_error,
        }
    }
}

fn system(q: &FourierPotential, base: f64, offset: f64) -> System<'_> {
    System {
        q,
        tables: q.tables(),
        base,
        offset,
    }
}

const IDENTITY: [f64; 12] = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Integrates the augmented system over one period.
pub fn fundamental_matrix(q: &FourierPotential, z: f64, cfg: &IntegratorConfig) -> Result<Monodromy> {
    cfg.validate()?;
    let mut sys = system(q, z, 0.0);
    let out = integrate(|x, y| sys.eval(x, y), 0.0, 1.0, IDENTITY, cfg)?;
    Ok(sys.finish(out))
}

/// As [`fundamental_matrix`], also returning the accepted step mesh.
pub fn fundamental_matrix_recorded(
    q: &FourierPotential,
    z: f64,
    cfg: &IntegratorConfig,
) -> Result<(Monodromy, Vec<f64>)> {
    cfg.validate()?;
    let mut sys = system(q, z, 0.0);
    let (out, mesh) = integrate_recorded(|x, y| sys.eval(x, y), 0.0, 1.0, IDENTITY, cfg)?;
    Ok((sys.finish(out), mesh))
}

/// `Ψ(1, base + offset)` on a fixed mesh. Smooth in `offset` down to rounding.
pub fn fundamental_matrix_on_mesh(q: &FourierPotential, base: f64, offset: f64, mesh: &[f64]) -> Monodromy {
    let mut sys = system(q, base, offset);
    let out = integrate_on_mesh(|x, y| sys.eval(x, y), mesh, IDENTITY);
    sys.finish(out)
}

pub fn lyapunov(q: &FourierPotential, z: f64, cfg: &IntegratorConfig) -> Result<LyapunovValue> {
    Ok(fundamental_matrix(q, z, cfg)?.lyapunov())
}

/// `C(s) = cos √s` continued to `s < 0` as `cosh √(−s)`, with `C'`, `C''`.
fn cos_sqrt(s: f64) -> (f64, f64, f64) {
    if s.abs() < 0.5 {
        // Σ (−s)^k / (2k)!
        let (mut c, mut c1, mut c2) = (0.0, 0.0, 0.0);
        let mut term = 1.0; // (−s)^k / (2k)!
        let mut fact_ratio = 1.0; // (−1)^k / (2k)!
        for k in 0..30 {
            c += term;
            if k >= 1 {
                c1 += k as f64 * fact_ratio * s.powi(k - 1);
            }
            if k >= 2 {
                c2 += (k * (k - 1)) as f64 * fact_ratio * s.powi(k - 2);
            }
            let denom = ((2 * k + 1) * (2 * k + 2)) as f64;
            term *= -s / denom;
            fact_ratio *= -1.0 / denom;
        }
        return (c, c1, c2);
    }
    if s > 0.0 {
        let r = s.sqrt();
        let (sn, cs) = r.sin_cos();
        (cs, -sn / (2.0 * r), (sn - r * cs) / (4.0 * r * r * r))
    } else {
        let w = (-s).sqrt();
        let (sh, ch) = (w.sinh(), w.cosh());
        (ch, -sh / (2.0 * w), (w * ch - sh) / (4.0 * w * w * w))
    }
}

/// Closed form for `q1 ≡ c`, `q2 ≡ 0`: `Δ = cos √(z² − c²)` (`cosh √(c² − z²)` inside the gap).
pub fn lyapunov_oracle_constant(c: f64, z: f64) -> LyapunovValue {
    let s = z * z - c * c;
    let (cs, c1, c2) = cos_sqrt(s);
    let delta = cs;
    let d_delta = 2.0 * z * c1;
    let dd_delta = 4.0 * z * z * c2 + 2.0 * c1;
    LyapunovValue {
        z,
        delta,
        d_delta,
        dd_delta,
        disc: delta * delta - 1.0,
        d_disc: 2.0 * delta * d_delta,
        dd_disc: 2.0 * (d_delta * d_delta + delta * dd_delta),
        det: 1.0,
        est_error: 0.0,
    }
}

/// `exp(M)` for the constant potential `q1 ≡ c`, using `M² = −(z² − c²) I`.
pub fn fundamental_matrix_oracle_constant(c: f64, z: f64) -> Mat2 {
    let s = z * z - c * c;
    let (cs, _, _) = cos_sqrt(s);
    // sin(√s)/√s continued analytically
    let sinc = if s.abs() < 1e-12 {
        1.0 - s / 6.0
    } else if s > 0.0 {
        s.sqrt().sin() / s.sqrt()
    } else {
        (-s).sqrt().sinh() / (-s).sqrt()
    };
    [[cs, -(z + c) * sinc], [(z - c) * sinc, cs]]
}
