//! Gap location and the spectral table.
//!
//! Gap `n` is searched in the window `W_n = [πn − π/2, πn + π/2]`. Its
//! critical point is the zero of `Δ′` there (located through `D′`); the height
//! and edges come from the discriminant `D = Δ² − 1` (see [`LyapunovValue`]),
//! which keeps relative precision for narrow gaps. Everything after the window
//! scan is computed in a [`GapFrame`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{SpectralConfig, WINDOW_SAMPLES};
use crate::error::{Result, ZsError};
use crate::monodromy::{fundamental_matrix_on_mesh, fundamental_matrix_recorded, lyapunov, LyapunovValue};
use crate::ode::IntegratorConfig;
use crate::potential::FourierPotential;
use crate::roots::brent_with;

/// Tail margin on `Σ_{|n|>N} A_n ≈ Σ |q̂_n|²`.
pub const TAIL_MARGIN: f64 = 0.5;

/// Gap-local coordinates: `z = base + offset`, evaluated on a fixed mesh.
///
/// Offsets resolve gaps far narrower than one ulp of `z`, and the fixed mesh
/// makes `Δ` a smooth function of the offset (an adaptive mesh would jump
/// whenever its step sequence changes).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapFrame {
    pub base: f64,
    pub d_minus: f64,
    pub d_crit: f64,
    pub d_plus: f64,
    pub mesh: Vec<f64>,
}

impl GapFrame {
    pub fn eval(&self, q: &FourierPotential, offset: f64) -> LyapunovValue {
        fundamental_matrix_on_mesh(q, self.base, offset, &self.mesh).lyapunov()
    }

    pub fn offset_of(&self, z: f64) -> f64 {
        z - self.base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub n: i64,
    pub z_minus: f64,
    pub z_plus: f64,
    pub z_crit: f64,
    pub h: f64,
    pub closed: bool,
    /// `Δ`, `Δ″` and `D″` at `z_crit`.
    #[serde(skip)]
    pub crit: LyapunovValue,
    #[serde(skip)]
    pub frame: GapFrame,
}

impl Gap {
    /// `(−1)^n`.
    pub fn sign(&self) -> f64 {
        parity(self.n)
    }

    pub fn width(&self) -> f64 {
        self.frame.d_plus - self.frame.d_minus
    }

    pub fn is_open(&self) -> bool {
        !self.closed
    }

    pub fn midpoint(&self) -> f64 {
        self.frame.base + 0.5 * (self.frame.d_minus + self.frame.d_plus)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width()
    }

    /// Open interior test.
    pub fn contains(&self, z: f64) -> bool {
        self.contains_offset(self.frame.offset_of(z))
    }

    pub fn contains_offset(&self, d: f64) -> bool {
        self.is_open() && d > self.frame.d_minus && d < self.frame.d_plus
    }
}

pub fn parity(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Band `σ_n = [z_{n−1}^+, z_n^−]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub n: i64,
    pub lo: f64,
    pub hi: f64,
    /// `π − |σ_n|`
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralTable {
    pub n_max: usize,
    pub gaps: Vec<Gap>,
    pub bands: Vec<Band>,
    pub s_min: f64,
    pub tail_bound: f64,
    pub config: SpectralConfig,
}

impl SpectralTable {
    pub fn gap(&self, n: i64) -> Option<&Gap> {
        let idx = n + self.n_max as i64;
        if idx < 0 {
            return None;
        }
        self.gaps.get(idx as usize)
    }

    pub fn open_gaps(&self) -> impl Iterator<Item = &Gap> {
        self.gaps.iter().filter(|g| g.is_open())
    }

    pub fn eta(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.eta).collect()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.gaps.iter().map(|g| g.h).collect()
    }
}

fn window_samples(q: &FourierPotential, n: i64, ode: &IntegratorConfig) -> Result<Vec<LyapunovValue>> {
    let lo = PI * n as f64 - 0.5 * PI;
    let step = PI / (WINDOW_SAMPLES - 1) as f64;
    (0..WINDOW_SAMPLES)
        .map(|j| lyapunov(q, lo + step * j as f64, ode))
        .collect()
}

/// Brent's method on `f(center + scale·t)` for an offset root between `a` and
/// `b`. Scaling keeps the termination floor relative to the bracket rather
/// than to `max(1, |x|)`.
fn offset_root<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let scale = (b - a).abs();
    let t = brent_with(|t| f(a + scale * t), 0.0, (b - a) / scale, fa, fb, 0.0)?;
    Ok(a + scale * t)
}

/// Locates gap `n`.
pub fn locate_gap(q: &FourierPotential, n: i64, cfg: &SpectralConfig) -> Result<Gap> {
    let ode = &cfg.ode;
    let s = parity(n);
    let samples = window_samples(q, n, ode)?;

    // Among Δ′ sign changes, take the one where (−1)^n Δ is largest.
    let bracket = samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].d_delta * w[1].d_delta <= 0.0)
        .max_by(|(_, a), (_, b)| {
            let ka = s * (a[0].delta + a[1].delta);
            let kb = s * (b[0].delta + b[1].delta);
            ka.total_cmp(&kb)
        })
        .map(|(j, _)| j)
        .ok_or(ZsError::NoCriticalPoint { n })?;

    // Coarse critical point on the adaptive mesh; it becomes the frame base.
    let (a, b) = (&samples[bracket], &samples[bracket + 1]);
    let base = brent_with(
        |z| Ok(lyapunov(q, z, ode)?.d_delta),
        a.z,
        b.z,
        a.d_delta,
        b.d_delta,
        0.0,
    )?;
    let (_, mesh) = fundamental_matrix_recorded(q, base, ode)?;
    let mut frame = GapFrame {
        base,
        mesh,
        ..Default::default()
    };

    // The critical point is the zero of D′ = 2ΔΔ′ rather than Δ′: v′ is
    // computed from D′, and both must vanish at the same point for the
    // integrands v′/(z_n − z) to stay smooth on narrow gaps.
    let (da, db) = (a.z - base, b.z - base);
    let (la, lb) = (frame.eval(q, da), frame.eval(q, db));
    let d_crit = if la.d_disc * lb.d_disc < 0.0 {
        offset_root(|d| Ok(frame.eval(q, d).d_disc), da, db, la.d_disc, lb.d_disc)?
    } else if la.d_delta * lb.d_delta < 0.0 {
        offset_root(|d| Ok(frame.eval(q, d).d_delta), da, db, la.d_delta, lb.d_delta)?
    } else {
        0.0
    };
    let crit = frame.eval(q, d_crit);
    if s * crit.delta <= 0.0 {
        return Err(ZsError::NoCriticalPoint { n });
    }
    let h = crit.disc.max(0.0).sqrt().asinh();
    let z_crit = base + d_crit;
    frame.d_crit = d_crit;

    if h < cfg.gap_tol {
        frame.d_minus = d_crit;
        frame.d_plus = d_crit;
        return Ok(Gap {
            n,
            z_minus: z_crit,
            z_plus: z_crit,
            z_crit,
            h,
            closed: true,
            crit,
            frame,
        });
    }

    // Edges: from the nearest scan point with D < 0 (re-evaluated in the frame) inward.
    let edge = |candidates: &mut dyn Iterator<Item = &LyapunovValue>| -> Result<f64> {
        for l in candidates {
            let d = frame.offset_of(l.z);
            let fl = frame.eval(q, d);
            if fl.disc < 0.0 {
                return offset_root(|x| Ok(frame.eval(q, x).disc), d, d_crit, fl.disc, crit.disc);
            }
        }
        Err(ZsError::NoBracket {
            a: samples[0].z,
            b: samples[WINDOW_SAMPLES - 1].z,
        })
    };
    let d_minus = edge(&mut samples[..=bracket].iter().rev().filter(|l| l.z < z_crit))?;
    let d_plus = edge(&mut samples[bracket + 1..].iter().filter(|l| l.z > z_crit))?;
    frame.d_minus = d_minus;
    frame.d_plus = d_plus;
    Ok(Gap {
        n,
        z_minus: base + d_minus,
        z_plus: base + d_plus,
        z_crit,
        h,
        closed: false,
        crit,
        frame,
    })
}

/// `1.5 · Σ_{N<|n|≤k_max} |q̂_n|²`; zero beyond the highest harmonic.
pub fn tail_bound(q: &FourierPotential, n_max: usize) -> f64 {
    let mut sum = 0.0;
    for k in (n_max + 1)..=q.k_max {
        let k = k as i64;
        sum += q.fourier_coeff(k).norm_sqr() + q.fourier_coeff(-k).norm_sqr();
    }
    (1.0 + TAIL_MARGIN) * sum
}

pub fn compute_table(q: &FourierPotential, cfg: &SpectralConfig) -> Result<SpectralTable> {
    cfg.validate()?;
    q.validate()?;
    let n_max = cfg.n_max as i64;
    let gaps: Vec<Gap> = (-n_max..=n_max)
        .into_par_iter()
        .map(|n| locate_gap(q, n, cfg))
        .collect::<Result<_>>()?;

    let bands: Vec<Band> = gaps
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0].z_plus, w[1].z_minus);
            Band {
                n: w[1].n,
                lo,
                hi,
                eta: PI - (hi - lo),
            }
        })
        .collect();
    let s_min = bands.iter().map(|b| b.hi - b.lo).fold(f64::INFINITY, f64::min);

    Ok(SpectralTable {
        n_max: cfg.n_max,
        gaps,
        bands,
        s_min,
        tail_bound: tail_bound(q, cfg.n_max),
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::preset;

    fn cfg(n: usize) -> SpectralConfig {
        SpectralConfig::with_n_max(n)
    }

    #[test]
    fn constant_central_gap() {
        let q = preset("constant:0.1").unwrap();
        let g = locate_gap(&q, 0, &cfg(4)).unwrap();
        assert!(g.is_open());
        assert!(g.z_crit.abs() < 1e-12);
        assert!((g.h - 0.1).abs() < 1e-10);
        assert!((g.z_minus + 0.1).abs() < 1e-10);
        assert!((g.z_plus - 0.1).abs() < 1e-10);
    }

    #[test]
    fn constant_closed_gap() {
        let q = preset("constant:0.1").unwrap();
        let g = locate_gap(&q, 1, &cfg(4)).unwrap();
        assert!(g.closed);
        assert!((g.z_crit - (0.01 + PI * PI).sqrt()).abs() < 1e-10);
        assert_eq!(g.z_minus, g.z_plus);
    }

    #[test]
    fn zero_potential_all_closed() {
        let q = preset("zero").unwrap();
        let t = compute_table(&q, &cfg(8)).unwrap();
        assert_eq!(t.gaps.len(), 17);
        for g in &t.gaps {
            assert!(g.closed);
            assert!((g.z_crit - PI * g.n as f64).abs() < 1e-10, "n = {}", g.n);
            assert!(g.h < 1e-10);
        }
        assert!(t.eta().iter().all(|e| e.abs() < 1e-10));
        assert_eq!(t.tail_bound, 0.0);
    }

    #[test]
    fn constant_table() {
        let q = preset("constant:0.1").unwrap();
        let t = compute_table(&q, &cfg(4)).unwrap();
        assert_eq!(t.open_gaps().count(), 1);
        assert!(t.s_min >= 1.0);
        assert!(t.gap(0).unwrap().is_open());
        assert!(t.gap(5).is_none());
    }

    #[test]
    fn single_mode_open_gaps_and_residuals() {
        let q = preset("single_mode:0.05").unwrap();
        let t = compute_table(&q, &cfg(8)).unwrap();
        let c = &t.config.ode;
        let tight = IntegratorConfig {
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            ..*c
        };
        for n in [-1, 1] {
            assert!(t.gap(n).unwrap().h > 1e-3);
        }
        for g in t.open_gaps() {
            let l = lyapunov(&q, g.z_crit, c).unwrap();
            assert!(l.d_delta.abs() <= 1e-10);
            for z in [g.z_minus, g.z_plus] {
                let l = lyapunov(&q, z, c).unwrap();
                assert!((g.sign() * l.delta - 1.0).abs() <= 1e-10);
            }
            for k in 1..20 {
                let z = g.z_minus + g.width() * k as f64 / 20.0;
                let l = lyapunov(&q, z, c).unwrap();
                assert!(l.disc >= 0.0, "n = {}, z = {z}", g.n);
                // Δ itself carries the full integration error; check it at tight tolerance.
                let l = lyapunov(&q, z, &tight).unwrap();
                assert!(
                    g.sign() * l.delta >= 1.0 - 1e-12,
                    "n = {}, excess {:e}",
                    g.n,
                    g.sign() * l.delta - 1.0
                );
            }
            assert!(g.width() <= 2.0 * g.h + 1e-9);
            assert!(g.z_minus <= g.z_crit && g.z_crit <= g.z_plus);
            assert!((g.h.cosh() - g.sign() * g.crit.delta).abs() < 1e-10);
        }
        for b in &t.bands {
            assert!(b.lo < b.hi);
        }
    }

    #[test]
    fn tail_bound_counts_harmonics_above_truncation() {
        let q = preset("two_mode").unwrap();
        assert_eq!(tail_bound(&q, 2), 0.0);
        let expect = 1.5 * 2.0 * 0.015f64.powi(2);
        assert!((tail_bound(&q, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn parity_sign() {
        assert_eq!(parity(-3), -1.0);
        assert_eq!(parity(0), 1.0);
        assert_eq!(parity(4), 1.0);
    }
}
