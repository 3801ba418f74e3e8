//! The imaginary part `v` of the quasimomentum on open gaps, and the gap
//! integrals built from it.
//!
//! On gap `n`, `cosh v = (−1)^n Δ`. We evaluate `v = asinh √D` with
//! `D = Δ² − 1 = sinh² v` taken from [`LyapunovValue::disc`], so that
//! `D′ = sinh(2v) v′` and `D″ = 2 cosh(2v) v′² + sinh(2v) v″`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SpectralConfig;
use crate::error::{Result, ZsError};
use crate::monodromy::LyapunovValue;
use crate::potential::FourierPotential;
use crate::quadrature::ThetaRule;
use crate::spectrum::{Gap, SpectralTable};

/// Points of the θ-grid used for the maxima `M_n`, `Ṁ_n`, `M̈_n`.
pub const MAX_GRID: usize = 64;

/// Relative radius (in units of the gap half-width) inside which
/// `v′/(z_m − z)` is replaced by its limit `−v″(z_m)`.
pub const GUARD_RADIUS: f64 = 1e-7;

/// `(v, v′, v″)` from a Lyapunov evaluation inside a gap. Points where
/// rounding has pushed `D` to zero or below return `v = 0` with zero
/// derivatives; they only occur at the outermost quadrature nodes.
pub fn v_from_lyapunov(l: &LyapunovValue) -> (f64, f64, f64) {
    v_from_disc(l.disc, l.d_disc, l.dd_disc)
}

fn v_from_disc(disc: f64, d_disc: f64, dd_disc: f64) -> (f64, f64, f64) {
    if disc <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let v = disc.sqrt().asinh();
    let s2 = (2.0 * v).sinh();
    let dv = d_disc / s2;
    let ddv = (dd_disc - 2.0 * (2.0 * v).cosh() * dv * dv) / s2;
    (v, dv, ddv)
}

/// Nodes with `|u| > EDGE_CUT` (`u` the position in units of the half-width)
/// take `D` from the edge fit rather than from the integrator.
pub const EDGE_CUT: f64 = 0.99;

/// Degree of the Chebyshev fit of `G = D / ((z − z⁻)(z⁺ − z))`.
const EDGE_FIT_DEGREE: usize = 12;

/// `(T_k(u), T_k′(u), T_k″(u))` for `k = 0..=deg`.
fn chebyshev(u: f64, deg: usize) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(deg + 1);
    out.push((1.0, 0.0, 0.0));
    if deg >= 1 {
        out.push((u, 1.0, 0.0));
    }
    for k in 2..=deg {
        let (t1, d1, e1) = out[k - 1];
        let (t0, d0, e0) = out[k - 2];
        out.push((
            2.0 * u * t1 - t0,
            2.0 * t1 + 2.0 * u * d1 - d0,
            4.0 * d1 + 2.0 * u * e1 - e0,
        ));
    }
    out
}

/// Smooth `(D, D′, D″)` at the outermost nodes of a gap.
///
/// Within a few ulps-worth of an edge, `D` from the integrator is dominated by
/// rounding (and by the rounding of the edge itself). The ratio
/// `G(u) = D / (r² (1 − u²))` is analytic across the gap, is accurate at
/// interior nodes, and at the edges equals `±D′(z^∓) / (2r)`. A least-squares
/// Chebyshev fit through these values supplies `D` and its derivatives at the
/// nodes beyond [`EDGE_CUT`]. Returns `None` if there are too few interior nodes.
fn edge_fit(u: &[f64], disc: &[f64], r: f64, g_minus: f64, g_plus: f64) -> Option<Vec<(f64, f64, f64)>> {
    let mut rows: Vec<(f64, f64)> = u
        .iter()
        .zip(disc)
        .filter(|(ui, _)| ui.abs() <= EDGE_CUT)
        .map(|(&ui, &d)| (ui, d / (r * r * (1.0 - ui * ui))))
        .collect();
    rows.push((-1.0, g_minus));
    rows.push((1.0, g_plus));
    let deg = EDGE_FIT_DEGREE.min(rows.len().saturating_sub(3));
    if rows.len() < 4 {
        return None;
    }
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.1.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), deg + 1, |i, k| chebyshev(rows[i].0, deg)[k].0);
    let b = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1 / scale));
    let coef = a.svd(true, true).solve(&b, 1e-14).ok()?;

    Some(
        u.iter()
            .map(|&ui| {
                let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
                for (k, (t, d, e)) in chebyshev(ui, deg).into_iter().enumerate() {
                    g += coef[k] * t;
                    g1 += coef[k] * d;
                    g2 += coef[k] * e;
                }
                let (g, g1, g2) = (g * scale, g1 * scale / r, g2 * scale / (r * r));
                // P(z) = (z − z⁻)(z⁺ − z) = r²(1 − u²), P′ = −2ru, P″ = −2
                let p = r * r * (1.0 - ui * ui);
                let p1 = -2.0 * r * ui;
                (g * p, g1 * p + g * p1, g2 * p + 2.0 * g1 * p1 - 2.0 * g)
            })
            .collect(),
    )
}

/// `v″(z_n)` at the critical point, where `v′ = 0`.
pub fn ddv_crit(gap: &Gap) -> f64 {
    gap.crit.dd_disc / (2.0 * gap.h).sinh()
}

/// `(v, v′, v″)` at `z` in the open gap, or at `z = z_crit`.
pub fn v_eval(q: &FourierPotential, gap: &Gap, z: f64) -> Result<(f64, f64, f64)> {
    v_eval_offset(q, gap, gap.frame.offset_of(z))
}

/// As [`v_eval`] at `z = base + d` in the gap's frame.
pub fn v_eval_offset(q: &FourierPotential, gap: &Gap, d: f64) -> Result<(f64, f64, f64)> {
    let z = gap.frame.base + d;
    if gap.closed {
        return Err(ZsError::ClosedGap { n: gap.n });
    }
    if d == gap.frame.d_crit {
        return Ok((gap.h, 0.0, ddv_crit(gap)));
    }
    if !gap.contains_offset(d) {
        return Err(ZsError::OutsideGap { n: gap.n, z });
    }
    let l = gap.frame.eval(q, d);
    if l.disc <= 0.0 || gap.sign() * l.delta <= 0.0 {
        return Err(ZsError::OutsideGap { n: gap.n, z });
    }
    Ok(v_from_lyapunov(&l))
}

/// Cached `v`, `v′`, `v″` at the quadrature nodes of one open gap.
///
/// `base`, `d_*` and `off` are the gap-frame coordinates; `z = base + off` is
/// rounded and only used where nearby-ulp differences do not matter.
#[derive(Debug, Clone)]
pub struct GapGrid {
    pub n: i64,
    pub z_minus: f64,
    pub z_plus: f64,
    pub z_crit: f64,
    pub base: f64,
    pub d_minus: f64,
    pub d_plus: f64,
    pub d_crit: f64,
    pub h: f64,
    pub ddv_crit: f64,
    pub off: Vec<f64>,
    pub z: Vec<f64>,
    pub dz: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub ddv: Vec<f64>,
}

impl GapGrid {
    pub fn build(q: &FourierPotential, gap: &Gap, rule: &ThetaRule) -> Result<Self> {
        if gap.closed {
            return Err(ZsError::ClosedGap { n: gap.n });
        }
        let f = &gap.frame;
        let (off, dz) = rule.map(f.d_minus, f.d_plus);
        let z = off.iter().map(|d| f.base + d).collect();
        let r = 0.5 * (f.d_plus - f.d_minus);
        let u: Vec<f64> = rule.theta.iter().map(|t| t.cos()).collect();
        let mut ls: Vec<(f64, f64, f64)> = off
            .iter()
            .map(|&d| {
                let l = f.eval(q, d);
                (l.disc, l.d_disc, l.dd_disc)
            })
            .collect();
        if u.iter().any(|ui| ui.abs() > EDGE_CUT) {
            let g_minus = f.eval(q, f.d_minus).d_disc / (2.0 * r);
            let g_plus = -f.eval(q, f.d_plus).d_disc / (2.0 * r);
            let disc: Vec<f64> = ls.iter().map(|l| l.0).collect();
            if let Some(fit) = edge_fit(&u, &disc, r, g_minus, g_plus) {
                for i in 0..u.len() {
                    if u[i].abs() > EDGE_CUT {
                        ls[i] = fit[i];
                    }
                }
            }
        }
        let mut v = Vec::with_capacity(off.len());
        let mut dv = Vec::with_capacity(off.len());
        let mut ddv = Vec::with_capacity(off.len());
        for &(d0, d1, d2) in &ls {
            let (a, b, c) = v_from_disc(d0, d1, d2);
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(ZsError::Quadrature { n: gap.n });
            }
            v.push(a);
            dv.push(b);
            ddv.push(c);
        }
        Ok(Self {
            n: gap.n,
            z_minus: gap.z_minus,
            z_plus: gap.z_plus,
            z_crit: gap.z_crit,
            base: f.base,
            d_minus: f.d_minus,
            d_plus: f.d_plus,
            d_crit: f.d_crit,
            h: gap.h,
            ddv_crit: ddv_crit(gap),
            off,
            z,
            dz,
            v,
            dv,
            ddv,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width()
    }

    pub fn width(&self) -> f64 {
        self.d_plus - self.d_minus
    }

    /// `|(x − z⁺)(x − z⁻)|^{1/2}` at `x = base + d`.
    pub fn half_circle_offset(&self, d: f64) -> f64 {
        half_circle(self.d_minus, self.d_plus, d)
    }

    pub fn contains_offset(&self, d: f64) -> bool {
        d > self.d_minus && d < self.d_plus
    }

    /// `∫_{g_n} f(z, v, v′) dz`.
    pub fn integrate<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.z.len() {
            acc += self.dz[i] * f(self.z[i], self.v[i], self.dv[i]);
        }
        acc
    }

    /// `∫_{g_n} v^p v′ / (z_n − z) dz` over the gap's own critical point,
    /// with the removable singularity at `z_n` filled by `v^p · (−v″(z_n))`.
    pub fn own_singular(&self, p: i32) -> f64 {
        let guard = GUARD_RADIUS * self.half_width();
        let limit = -self.ddv_crit;
        let mut acc = 0.0;
        for i in 0..self.z.len() {
            let d = self.d_crit - self.off[i];
            let vp = self.v[i].powi(p);
            let f = if d.abs() < guard {
                vp * limit
            } else {
                vp * self.dv[i] / d
            };
            acc += self.dz[i] * f;
        }
        acc
    }
}

/// Grids of all open gaps, in label order.
#[derive(Debug, Clone)]
pub struct GapGrids {
    pub grids: Vec<GapGrid>,
}

impl GapGrids {
    pub fn build(q: &FourierPotential, table: &SpectralTable) -> Result<Self> {
        let rule = ThetaRule::new(table.config.quad_nodes);
        let open: Vec<&Gap> = table.open_gaps().collect();
        let grids = open
            .par_iter()
            .map(|g| GapGrid::build(q, g, &rule))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grids })
    }

    pub fn get(&self, n: i64) -> Option<&GapGrid> {
        self.grids.iter().find(|g| g.n == n)
    }

    pub fn position(&self, n: i64) -> Option<usize> {
        self.grids.iter().position(|g| g.n == n)
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// `Σ_{k≠m} ∫_{g_k} f(z, v) dz` over the open gaps other than `m`.
    pub fn others<F: Fn(f64, f64) -> f64>(&self, m: i64, f: F) -> f64 {
        self.grids
            .iter()
            .filter(|g| g.n != m)
            .map(|g| g.integrate(|z, v, _| f(z, v)))
            .sum()
    }
}

/// `A_n = (2/π) ∫_{g_n} v dz` for one gap.
pub fn action(q: &FourierPotential, gap: &Gap, cfg: &SpectralConfig) -> Result<f64> {
    if gap.closed {
        return Ok(0.0);
    }
    let rule = ThetaRule::new(cfg.quad_nodes);
    let grid = GapGrid::build(q, gap, &rule)?;
    Ok(action_from_grid(&grid))
}

fn action_from_grid(grid: &GapGrid) -> f64 {
    2.0 / PI * grid.integrate(|_, v, _| v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionSet {
    /// Labels `−N..=N`.
    pub n: Vec<i64>,
    pub a_action: Vec<f64>,
    /// `√A_n`; heights are nonnegative so the sign factor is `+1`.
    pub a_root: Vec<f64>,
    /// `|A_n − A_n^{(half)}|` against the rule with half as many nodes.
    pub quad_error: Vec<f64>,
}

impl ActionSet {
    pub fn compute(q: &FourierPotential, table: &SpectralTable, grids: &GapGrids) -> Result<Self> {
        let half_rule = ThetaRule::new((table.config.quad_nodes / 2).max(2));
        let mut n = Vec::new();
        let mut a_action = Vec::new();
        let mut quad_error = Vec::new();
        let errs: Vec<f64> = grids
            .grids
            .par_iter()
            .map(|grid| {
                let gap = table.gap(grid.n).expect("grid of a tabulated gap");
                let coarse = GapGrid::build(q, gap, &half_rule)?;
                Ok((action_from_grid(grid) - action_from_grid(&coarse)).abs())
            })
            .collect::<Result<_>>()?;
        for g in &table.gaps {
            n.push(g.n);
            match grids.position(g.n) {
                Some(i) => {
                    a_action.push(action_from_grid(&grids.grids[i]));
                    quad_error.push(errs[i]);
                }
                None => {
                    a_action.push(0.0);
                    quad_error.push(0.0);
                }
            }
        }
        let a_root = a_action.iter().map(|a| a.max(0.0).sqrt()).collect();
        Ok(Self {
            n,
            a_action,
            a_root,
            quad_error,
        })
    }

    pub fn get(&self, n: i64) -> f64 {
        self.n.iter().position(|&k| k == n).map_or(0.0, |i| self.a_action[i])
    }

    pub fn sum(&self) -> f64 {
        self.a_action.iter().sum()
    }

    pub fn norm2(&self) -> f64 {
        self.a_action.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.a_action.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// `Q_j = (1/π) Σ ∫_{g_n} z^j v dz` for `j = 0, 1, 2`.
pub fn functionals_q(grids: &GapGrids) -> (f64, f64, f64) {
    let mut q = (0.0, 0.0, 0.0);
    for g in &grids.grids {
        q.0 += g.integrate(|_, v, _| v);
        q.1 += g.integrate(|z, v, _| z * v);
        q.2 += g.integrate(|z, v, _| z * z * v);
    }
    (q.0 / PI, q.1 / PI, q.2 / PI)
}

/// `V_n = (8/3π) ∫_{g_n} v³ dz` per open gap (label order) and their sum.
pub fn functional_v(grids: &GapGrids) -> (f64, Vec<(i64, f64)>) {
    let per: Vec<(i64, f64)> = grids
        .grids
        .iter()
        .map(|g| (g.n, 8.0 / (3.0 * PI) * g.integrate(|_, v, _| v * v * v)))
        .collect();
    (per.iter().map(|p| p.1).sum(), per)
}

/// Which half-circle divides `v(t)` in the integrand of `Y_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfCircle {
    /// `v_m(t) = |(t − z_m^+)(t − z_m^−)|^{1/2}` of the gap `m` carrying `x`.
    Source,
    /// The half-circle of the gap containing `t`.
    Containing,
}

/// `|(t − b)(t − a)|^{1/2}`.
pub fn half_circle(a: f64, b: f64, t: f64) -> f64 {
    ((t - a) * (t - b)).abs().sqrt()
}

/// `Y_m(x)` and its first two derivatives at `x = base + d` in the open
/// gap `m` (frame coordinates of that gap).
pub fn y_and_derivatives(grids: &GapGrids, m: i64, d: f64) -> Result<(f64, f64, f64)> {
    y_with(grids, m, d, HalfCircle::Source)
}

pub fn y_with(grids: &GapGrids, m: i64, d: f64, reading: HalfCircle) -> Result<(f64, f64, f64)> {
    let own = grids.get(m).ok_or(ZsError::ClosedGap { n: m })?;
    if !own.contains_offset(d) {
        return Err(ZsError::OutsideGap { n: m, z: own.base + d });
    }
    let (mut y, mut y1, mut y2) = (0.0, 0.0, 0.0);
    for g in grids.grids.iter().filter(|g| g.n != m) {
        for i in 0..g.z.len() {
            // Other gaps are well separated from gap m, so rounding t to f64 is harmless.
            let t = g.z[i] - own.base;
            let denom = match reading {
                HalfCircle::Source => half_circle(own.d_minus, own.d_plus, t),
                HalfCircle::Containing => g.half_circle_offset(g.off[i]),
            };
            if denom == 0.0 {
                continue;
            }
            let w = g.dz[i] * g.v[i] / denom;
            let dt = t - d;
            let ad = dt.abs();
            y += w / ad;
            y1 += w * dt.signum() / (dt * dt);
            y2 += 2.0 * w / (ad * ad * ad);
        }
    }
    Ok((y / PI, y1 / PI, y2 / PI))
}

/// Interior grid offsets `d_j = d⁰ + r cos θ_j`, `θ_j = π(j + ½)/64`.
pub fn max_grid(grid: &GapGrid) -> Vec<f64> {
    let mid = 0.5 * (grid.d_minus + grid.d_plus);
    let r = grid.half_width();
    (0..MAX_GRID)
        .map(|j| mid + r * (PI * (j as f64 + 0.5) / MAX_GRID as f64).cos())
        .collect()
}

/// Grid maxima `(M_m, Ṁ_m, M̈_m)` of `Y_m`, `|Y_m′|`, `|Y_m″|`. These are lower
/// bounds of the true suprema.
pub fn y_maxima(grids: &GapGrids, m: i64) -> Result<(f64, f64, f64)> {
    let own = grids.get(m).ok_or(ZsError::ClosedGap { n: m })?;
    let mut out = (0.0f64, 0.0f64, 0.0f64);
    for d in max_grid(own) {
        if !own.contains_offset(d) {
            continue;
        }
        let (y, y1, y2) = y_and_derivatives(grids, m, d)?;
        out.0 = out.0.max(y);
        out.1 = out.1.max(y1.abs());
        out.2 = out.2.max(y2.abs());
    }
    Ok(out)
}

/// `S_m = ½ Σ_{n≠m} A_n / (s² (n − m)²)` with `s = s_min`.
pub fn comparison_s(table: &SpectralTable, actions: &ActionSet) -> Vec<f64> {
    let s2 = table.s_min * table.s_min;
    actions
        .n
        .iter()
        .map(|&m| {
            let mut acc = 0.0;
            for (k, &n) in actions.n.iter().enumerate() {
                if n != m {
                    let d = (n - m) as f64;
                    acc += actions.a_action[k] / (s2 * d * d);
                }
            }
            0.5 * acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::preset;
    use crate::spectrum::compute_table;

    fn setup(name: &str, n: usize) -> (FourierPotential, SpectralTable, GapGrids) {
        let q = preset(name).unwrap();
        let t = compute_table(&q, &SpectralConfig::with_n_max(n)).unwrap();
        let g = GapGrids::build(&q, &t).unwrap();
        (q, t, g)
    }

    #[test]
    fn semicircle_point_values() {
        let (q, t, _) = setup("constant:0.1", 4);
        let gap = t.gap(0).unwrap();
        let (v, _, _) = v_eval(&q, gap, 0.05).unwrap();
        assert!((v - 0.0075f64.sqrt()).abs() < 1e-10);
        let (v, dv, ddv) = v_eval(&q, gap, gap.z_crit).unwrap();
        assert!((v - 0.1).abs() < 1e-10);
        assert_eq!(dv, 0.0);
        assert!((ddv + 10.0).abs() < 1e-7);
        // Off-center derivatives against the semicircle.
        let z = -0.03;
        let (_, dv, ddv) = v_eval(&q, gap, z).unwrap();
        let w: f64 = 0.01 - z * z;
        assert!((dv - (-z / w.sqrt())).abs() < 1e-8);
        assert!((ddv - (-0.01 / w.powf(1.5))).abs() < 1e-6);
    }

    #[test]
    fn v_eval_errors() {
        let (q, t, _) = setup("constant:0.1", 2);
        let gap = t.gap(0).unwrap();
        assert!(matches!(v_eval(&q, gap, 0.2), Err(ZsError::OutsideGap { .. })));
        assert!(matches!(
            v_eval(&q, t.gap(1).unwrap(), 3.0),
            Err(ZsError::ClosedGap { .. })
        ));
    }

    #[test]
    fn semicircle_functionals() {
        let (q, t, g) = setup("constant:0.1", 4);
        let a = ActionSet::compute(&q, &t, &g).unwrap();
        assert!((a.get(0) - 0.01).abs() < 1e-11);
        assert!(a.quad_error[4] < 1e-12);
        assert_eq!(a.get(1), 0.0);
        assert!((a.a_root[4] - 0.1).abs() < 1e-9);
        let (q0, q1, q2) = functionals_q(&g);
        assert!((q0 - 0.005).abs() < 1e-12);
        assert!(q1.abs() < 1e-15);
        assert!((q2 - 1.25e-5).abs() < 1e-14);
        let (v, per) = functional_v(&g);
        assert!((v - 1e-4).abs() < 1e-13);
        assert_eq!(per.len(), 1);
        let s = comparison_s(&t, &a);
        assert_eq!(s[4], 0.0);
        assert!((s[5] - 0.01 / (2.0 * t.s_min * t.s_min)).abs() < 1e-15);
        let d = g.grids[0].d_crit + 0.02;
        let (y, y1, y2) = y_and_derivatives(&g, 0, d).unwrap();
        assert_eq!((y, y1, y2), (0.0, 0.0, 0.0));
        assert!((action(&q, t.gap(0).unwrap(), &t.config).unwrap() - 0.01).abs() < 1e-11);
    }

    #[test]
    fn zero_potential_is_empty() {
        let (q, t, g) = setup("zero", 3);
        assert!(g.is_empty());
        let a = ActionSet::compute(&q, &t, &g).unwrap();
        assert_eq!(a.sum(), 0.0);
        assert_eq!(functionals_q(&g), (0.0, 0.0, 0.0));
        assert_eq!(functional_v(&g).0, 0.0);
    }

    #[test]
    fn v_shape_on_two_mode_gaps() {
        let (_, _, g) = setup("two_mode", 6);
        for grid in &g.grids {
            for i in 0..grid.z.len() {
                assert!(grid.v[i] <= grid.h * (1.0 + 1e-9), "n = {}", grid.n);
                assert!(grid.v[i] >= 0.0);
            }
        }
    }

    #[test]
    fn idv1_reconstruction_on_two_mode() {
        let (q, t, g) = setup("two_mode", 8);
        for grid in &g.grids {
            let gap = t.gap(grid.n).unwrap();
            for k in 1..=10 {
                let d = grid.d_minus + grid.width() * k as f64 / 11.0;
                let (v, _, _) = v_eval_offset(&q, gap, d).unwrap();
                let (y, _, _) = y_and_derivatives(&g, grid.n, d).unwrap();
                let vm = grid.half_circle_offset(d);
                assert!(y >= 0.0);
                assert!((v - vm * (1.0 + y)).abs() <= 1e-6 * grid.h, "n = {}", grid.n);
            }
        }
    }
}
