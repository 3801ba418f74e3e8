//! The full pipeline for one potential, and the battery of identities,
//! inequalities and internal-consistency checks run on its output.
//!
//! Only identities and internal-consistency checks decide
//! [`VerificationReport::overall_pass`]; inequalities and flagged
//! discrepancies are reported as data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SpectralConfig;
use crate::error::Result;
use crate::gradients::{action_derivative_crosscheck, gradient_data, GradientData};
use crate::potential::{FourierPotential, TrigSeries, SMALL_NORM};
use crate::quasimomentum::{
    comparison_s, functional_v, functionals_q, max_grid, v_eval_offset, y_and_derivatives, y_maxima, ActionSet,
    GapGrids,
};
use crate::spectrum::{compute_table, SpectralTable};

/// Additive slack for every inequality.
pub const INEQ_SLACK: f64 = 1e-7;
/// Relative tolerance for quadrature identities.
pub const QUAD_REL_TOL: f64 = 1e-6;
pub const CROSSCHECK_REL_TOL: f64 = 1e-7;
pub const SOLVE_REL_TOL: f64 = 1e-12;
/// Points per radius for the sine bound.
pub const SINE_SAMPLES: usize = 1000;
pub const SINE_RADII: [f64; 4] = [0.1, 0.5, 1.0, std::f64::consts::FRAC_PI_2];
/// Interior points per gap for the half-circle factorization check.
const FACTOR_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Identity,
    Inequality,
    InternalConsistency,
    FlaggedDiscrepancy,
}

/// One check. For equalities `margin = |lhs − rhs|` and the check holds when
/// `margin ≤ tolerance`; for `lhs ≤ rhs` checks `margin = rhs − lhs` and it
/// holds when `margin ≥ −tolerance`. `notes` says which form applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub notes: String,
}

impl CheckResult {
    pub fn equal(name: impl Into<String>, kind: CheckKind, lhs: f64, rhs: f64, tolerance: f64, notes: &str) -> Self {
        let margin = (lhs - rhs).abs();
        Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            margin,
            tolerance,
            holds: margin <= tolerance,
            notes: join("equality", notes),
        }
    }

    pub fn at_most(name: impl Into<String>, kind: CheckKind, lhs: f64, rhs: f64, tolerance: f64, notes: &str) -> Self {
        let margin = rhs - lhs;
        Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            margin,
            tolerance,
            holds: margin >= -tolerance,
            notes: join("lhs <= rhs", notes),
        }
    }
}

fn join(form: &str, notes: &str) -> String {
    if notes.is_empty() {
        form.to_string()
    } else {
        format!("{form}; {notes}")
    }
}

/// `lhs_n ≤ rhs_n` over a family, reported at the index with the smallest margin.
fn worst_at_most<I>(name: &str, kind: CheckKind, items: I, tolerance: f64, notes: &str) -> CheckResult
where
    I: IntoIterator<Item = (i64, f64, f64)>,
{
    let mut worst: Option<(i64, f64, f64)> = None;
    for (n, l, r) in items {
        if worst.is_none_or(|(_, wl, wr)| r - l < wr - wl) {
            worst = Some((n, l, r));
        }
    }
    match worst {
        Some((n, l, r)) => CheckResult::at_most(name, kind, l, r, tolerance, &join(&format!("worst n = {n}"), notes)),
        None => CheckResult::at_most(name, kind, 0.0, 0.0, tolerance, &join("no open gaps", notes)),
    }
}

/// Everything computed for one potential.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub potential: FourierPotential,
    pub table: SpectralTable,
    pub grids: GapGrids,
    pub actions: ActionSet,
    pub q: (f64, f64, f64),
    pub u: f64,
    pub v_per_gap: Vec<(i64, f64)>,
    pub grads: GradientData,
    /// `S_m`, aligned with `actions.n`.
    pub s: Vec<f64>,
    pub h0: f64,
    pub h1: f64,
    pub h_half: f64,
    pub h_double: f64,
}

impl Analysis {
    pub fn run(q: &FourierPotential, cfg: &SpectralConfig) -> Result<Self> {
        let table = compute_table(q, cfg)?;
        let grids = GapGrids::build(q, &table)?;
        let actions = ActionSet::compute(q, &table, &grids)?;
        let qs = functionals_q(&grids);
        let (u, v_per_gap) = functional_v(&grids);
        let h0 = q.direct_h0();
        let grads = gradient_data(&table, &grids, h0)?;
        let s = comparison_s(&table, &actions);
        let (h_half, h_double) = q.direct_h();
        Ok(Self {
            potential: q.clone(),
            table,
            grids,
            actions,
            q: qs,
            u,
            v_per_gap,
            grads,
            s,
            h0,
            h1: q.direct_h1(),
            h_half,
            h_double,
        })
    }

    pub fn small_norm(&self) -> bool {
        self.potential.norm() <= SMALL_NORM
    }

    fn s_of(&self, n: i64) -> f64 {
        self.actions.n.iter().position(|&k| k == n).map_or(0.0, |i| self.s[i])
    }

    /// `Σ_n (2πn)^p A_n`.
    fn weighted_actions(&self, p: i32) -> f64 {
        self.actions
            .n
            .iter()
            .zip(&self.actions.a_action)
            .map(|(&n, a)| (2.0 * PI * n as f64).powi(p) * a)
            .sum()
    }

    /// Right side `Σ (2πn)² A_n + 2H_0² − U` of the trace formula for `H`.
    pub fn trace_formula_rhs(&self) -> f64 {
        self.weighted_actions(2) + 2.0 * self.h0 * self.h0 - self.u
    }

    pub fn identity_tolerance(&self) -> f64 {
        1e-8f64.max(3.0 * self.table.tail_bound)
    }

    pub fn trace_tolerance(&self) -> f64 {
        1e-7f64.max(3.0 * self.table.tail_bound)
    }

    /// `‖∂U − 2A‖₂` over the open gaps (closed gaps contribute zero).
    pub fn du_minus_2a(&self) -> f64 {
        self.grads
            .open_idx
            .iter()
            .zip(&self.grads.du_da)
            .map(|(&n, d)| (d - 2.0 * self.actions.get(n)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn check_identities(a: &Analysis) -> Vec<CheckResult> {
    use CheckKind::*;
    let tol = a.identity_tolerance();
    let ttol = a.trace_tolerance();
    let (q0, q1, q2) = a.q;
    let rhs = a.trace_formula_rhs();
    vec![
        CheckResult::equal("h0_equals_action_sum", Identity, a.h0, a.actions.sum(), tol, ""),
        CheckResult::equal("h0_equals_2q0", Identity, a.h0, 2.0 * q0, tol, ""),
        CheckResult::equal(
            "h1_equals_weighted_action_sum",
            Identity,
            a.h1,
            a.weighted_actions(1),
            tol,
            "",
        ),
        CheckResult::equal("h1_equals_4q1", Identity, a.h1, 4.0 * q1, tol, ""),
        CheckResult::equal(
            "h2_equals_8q2",
            Identity,
            a.h_double,
            8.0 * q2,
            ttol,
            "H2 = integral of |q'|^2 + |q|^4",
        ),
        CheckResult::equal(
            "hamiltonian_trace_formula",
            Identity,
            a.h_double,
            rhs,
            ttol,
            "H2 = integral of |q'|^2 + |q|^4",
        ),
        CheckResult::equal(
            "hamiltonian_trace_formula_half_normalization",
            FlaggedDiscrepancy,
            a.h_half,
            rhs,
            ttol,
            "candidate H = half the integral of |q'|^2 + |q|^4; expected to fail whenever U > 0",
        ),
    ]
}

/// Per open gap: `(n, |g_n|, h_n, A_n, S_n, M_n, Ṁ_n, M̈_n)`.
struct GapStats {
    n: i64,
    g: f64,
    h: f64,
    a: f64,
    s: f64,
    m0: f64,
    m1: f64,
    m2: f64,
    y_crit: f64,
    mid_offset: f64,
}

fn gap_stats(a: &Analysis) -> Result<Vec<GapStats>> {
    a.grids
        .grids
        .par_iter()
        .map(|g| {
            let (m0, m1, m2) = y_maxima(&a.grids, g.n)?;
            let (y_crit, _, _) = y_and_derivatives(&a.grids, g.n, g.d_crit)?;
            Ok(GapStats {
                n: g.n,
                g: g.width(),
                h: g.h,
                a: a.actions.get(g.n),
                s: a.s_of(g.n),
                m0,
                m1,
                m2,
                y_crit,
                mid_offset: (g.d_crit - 0.5 * (g.d_minus + g.d_plus)).abs(),
            })
        })
        .collect()
}

pub fn check_estimates(a: &Analysis) -> Result<Vec<CheckResult>> {
    use CheckKind::*;
    let t = INEQ_SLACK;
    let st = gap_stats(a)?;
    let gr = &a.grads;
    let mut out = Vec::new();

    let a1: f64 = a.actions.sum();
    let a2 = a.actions.norm2();
    let ainf = a.actions.norm_inf();
    let qn = a.potential.norm();
    let h_all = a.table.heights();
    let h2norm = h_all.iter().map(|h| h * h).sum::<f64>().sqrt();
    let hinf = h_all.iter().fold(0.0f64, |m, h| m.max(*h));
    let gnorm = a.table.gaps.iter().map(|g| g.width().powi(2)).sum::<f64>().sqrt();
    let eta = a.table.eta().iter().map(|e| e * e).sum::<f64>().sqrt();
    let c0 = hinf.cosh();
    let c1 = 2.0f64.max((0.5 * PI * ainf).cosh());

    // Unconditioned estimates.
    out.push(CheckResult::at_most("u_nonnegative", Inequality, 0.0, a.u, t, ""));
    out.push(CheckResult::at_most(
        "u_le_four_thirds_l1_sq",
        Inequality,
        a.u,
        4.0 / 3.0 * a1 * a1,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "u_ge_pi_over_6_l2_sq",
        Inequality,
        PI / 6.0 * a2 * a2,
        a.u,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "u_le_2pi_over_3_sqrt_c1_l2_sq",
        Inequality,
        a.u,
        2.0 * PI / 3.0 * c1.sqrt() * a2 * a2,
        t,
        &format!("C1 = {c1}"),
    ));
    out.push(worst_at_most(
        "nu_sq_le_h_sq",
        Inequality,
        st.iter().zip(&gr.nu).map(|(s, nu)| (s.n, nu * nu, s.h * s.h)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "h_sq_le_h0",
        Inequality,
        st.iter().map(|s| (s.n, s.h * s.h, a.h0)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "gap_le_twice_height",
        Inequality,
        st.iter().map(|s| (s.n, s.g, 2.0 * s.h)),
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "height_l2_lower",
        Inequality,
        0.5 * qn,
        h2norm,
        t,
        "heights truncated at |n| <= N",
    ));
    out.push(CheckResult::at_most(
        "height_l2_upper",
        Inequality,
        h2norm,
        3.0 * (1.0 + qn).sqrt() * qn,
        t,
        "",
    ));
    out.push(CheckResult::at_most("gap_l2_lower", Inequality, 0.5 * gnorm, qn, t, ""));
    out.push(CheckResult::at_most(
        "gap_l2_upper",
        Inequality,
        qn,
        2.0 * gnorm * (1.0 + gnorm),
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "band_defect_l2",
        Inequality,
        eta,
        16.0 * qn.min(h2norm).min(gnorm * (1.0 + gnorm)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "action_ge_quarter_gap_sq",
        Inequality,
        st.iter().map(|s| (s.n, s.g * s.g / 4.0, s.a)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "action_ge_gap_height_over_pi",
        Inequality,
        st.iter().map(|s| (s.n, s.g * s.h / PI, s.a)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "action_le_gap_height_over_pi",
        FlaggedDiscrepancy,
        st.iter().map(|s| (s.n, s.a, s.g * s.h / PI)),
        t,
        "constant 1/pi contradicts the lower bound |g|h/pi <= A and fails for the semicircle (A = c^2 > 2c^2/pi)",
    ));
    out.push(worst_at_most(
        "action_le_2_gap_height_over_pi",
        FlaggedDiscrepancy,
        st.iter().map(|s| (s.n, s.a, 2.0 * s.g * s.h / PI)),
        t,
        "corrected constant 2/pi, forced by v <= h on the gap",
    ));
    out.push(worst_at_most(
        "twice_height_le_gap_times_1_plus_m",
        Inequality,
        st.iter().map(|s| (s.n, 2.0 * s.h, s.g * (1.0 + s.m0))),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "action_excess_nonnegative",
        Inequality,
        st.iter().map(|s| (s.n, 0.0, s.a - s.g * s.g / 4.0)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "action_excess_le_quarter_gap_sq_m",
        Inequality,
        st.iter().map(|s| (s.n, s.a - s.g * s.g / 4.0, s.g * s.g / 4.0 * s.m0)),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "height_minus_nu",
        Inequality,
        st.iter().zip(&gr.nu).map(|(s, nu)| {
            let rhs = 4.0 * s.h * s.m0 + s.h * s.g * s.g / 4.0 * (3.0 * (1.0 + s.g / 2.0) * s.m1 * s.m1 + s.m2);
            (s.n, (s.h - nu).abs(), rhs)
        }),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "twice_height_vs_gap_times_1_plus_y",
        Inequality,
        st.iter().map(|s| {
            (
                s.n,
                (2.0 * s.h - s.g * (1.0 + s.y_crit)).abs(),
                s.g.powi(3) / 8.0 * s.m1 * s.m1,
            )
        }),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "action_vs_quarter_gap_height",
        FlaggedDiscrepancy,
        st.iter().map(|s| {
            (
                s.n,
                (s.a - s.g * s.h / 4.0).abs(),
                s.g.powi(4) / 128.0 * (s.m2 + 6.0 * s.m1 * s.m1),
            )
        }),
        t,
        "reference |g|h/4 fails for the semicircle, where A = |g|h/2 exactly",
    ));
    out.push(worst_at_most(
        "action_vs_half_gap_height",
        FlaggedDiscrepancy,
        st.iter().map(|s| {
            (
                s.n,
                (s.a - s.g * s.h / 2.0).abs(),
                s.g.powi(4) / 128.0 * (s.m2 + 6.0 * s.m1 * s.m1),
            )
        }),
        t,
        "corrected reference |g|h/2; grid maxima",
    ));
    out.push(worst_at_most(
        "critical_point_vs_midpoint",
        Inequality,
        st.iter().map(|s| (s.n, s.mid_offset, s.g * s.g / 4.0 * s.m1)),
        t,
        "grid maxima",
    ));
    let v_of = |n: i64| a.v_per_gap.iter().find(|p| p.0 == n).map_or(0.0, |p| p.1);
    out.push(worst_at_most(
        "v_n_ge_action_h_sq_over_3",
        Inequality,
        st.iter()
            .map(|s| (s.n, s.a * s.h * s.h / 3.0, s.g * s.h.powi(3) / (3.0 * PI))),
        t,
        "first link of the chain; equivalent to A <= |g|h/pi, see action_le_gap_height_over_pi",
    ));
    out.push(worst_at_most(
        "v_n_ge_gap_h_cubed",
        Inequality,
        st.iter().map(|s| (s.n, s.g * s.h.powi(3) / (3.0 * PI), v_of(s.n))),
        t,
        "",
    ));
    out.push(worst_at_most(
        "v_n_le_four_thirds_h_sq_action",
        Inequality,
        st.iter().map(|s| (s.n, v_of(s.n), 4.0 / 3.0 * s.h * s.h * s.a)),
        t,
        "",
    ));
    let sum_ah2: f64 = st.iter().map(|s| s.a * s.h * s.h).sum();
    out.push(CheckResult::at_most(
        "v_ge_third_sum_a_h_sq",
        Inequality,
        sum_ah2 / 3.0,
        a.u,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "v_le_four_thirds_sum_a_h_sq",
        Inequality,
        a.u,
        4.0 / 3.0 * sum_ah2,
        t,
        "",
    ));
    out.push(worst_at_most(
        "cosh_h_minus_1_le_c0_gap_sq",
        Inequality,
        st.iter().map(|s| (s.n, s.h.cosh() - 1.0, c0 * s.g * s.g / 8.0)),
        t,
        &format!("C0 = {c0}"),
    ));
    out.push(worst_at_most(
        "height_le_sqrt_c0_gap",
        Inequality,
        st.iter().map(|s| (s.n, s.h, c0.sqrt() / 2.0 * s.g)),
        t,
        "",
    ));
    if c0 >= 2.0 {
        let top = st.iter().filter(|s| s.h == hinf);
        out.push(worst_at_most(
            "large_c0_height_le_pi_over_2_action",
            Inequality,
            top.map(|s| (s.n, s.h, PI / 2.0 * s.a)),
            t,
            "",
        ));
    } else {
        out.push(CheckResult::at_most(
            "large_c0_height_le_pi_over_2_action",
            Inequality,
            0.0,
            0.0,
            t,
            &format!("vacuous: C0 = {c0} < 2"),
        ));
    }
    out.push(CheckResult::at_most("c0_le_c1", Inequality, c0, c1, t, ""));

    if !a.small_norm() {
        out.push(CheckResult::at_most(
            "small_norm_regime",
            Inequality,
            qn,
            SMALL_NORM,
            0.0,
            "norm above 1/8: conditioned estimates skipped",
        ));
        return Ok(out);
    }

    // Estimates conditioned on ‖q‖ ≤ 1/8.
    out.push(CheckResult::at_most(
        "u_minus_l2_sq_cubic",
        Inequality,
        (a.u - a2 * a2).abs(),
        4.0 * PI * 3f64.sqrt() * a2.powi(3),
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "du_minus_2a_l2",
        Inequality,
        a.du_minus_2a(),
        11.0 * PI * PI * ainf * a2,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "min_band_length_ge_1",
        Inequality,
        1.0,
        a.table.s_min,
        t,
        "",
    ));
    out.push(worst_at_most(
        "max_gap_le_quarter",
        Inequality,
        st.iter().map(|s| (s.n, s.g, 0.25)),
        t,
        "",
    ));
    let kernel_sup: Vec<(i64, f64, f64)> = a
        .grids
        .grids
        .iter()
        .zip(&st)
        .map(|(own, s)| {
            let sup = max_grid(own)
                .into_iter()
                .map(|d| {
                    let acc: f64 = a
                        .grids
                        .grids
                        .iter()
                        .filter(|g| g.n != own.n)
                        .map(|g| {
                            g.integrate(|z, v, _| {
                                let x = z - own.base - d;
                                v / (x * x)
                            })
                        })
                        .sum();
                    acc / PI
                })
                .fold(0.0f64, f64::max);
            (s.n, sup, s.s)
        })
        .collect();
    out.push(worst_at_most(
        "cross_gap_kernel_le_s",
        Inequality,
        kernel_sup,
        t,
        "sup over the 64-point grid",
    ));
    out.push(worst_at_most(
        "y_max_le_s",
        Inequality,
        st.iter().map(|s| (s.n, s.m0, s.s)),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "y1_max_le_s",
        Inequality,
        st.iter().map(|s| (s.n, s.m1, s.s)),
        t,
        "grid maxima",
    ));
    out.push(worst_at_most(
        "y2_max_le_s",
        Inequality,
        st.iter().map(|s| (s.n, s.m2, s.s)),
        t,
        "grid maxima",
    ));
    let s_inf = a.s.iter().fold(0.0f64, |m, x| m.max(*x));
    let s_2 = a.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s_1: f64 = a.s.iter().sum();
    out.push(CheckResult::at_most(
        "s_sup_le_half_h0",
        Inequality,
        s_inf,
        a.h0 / 2.0,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "half_h0_le_1_over_128",
        Inequality,
        a.h0 / 2.0,
        1.0 / 128.0,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "s_l2_le_pi_sq_over_6_a_l2",
        Inequality,
        s_2,
        PI * PI / 6.0 * a2,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "s_l1_le_pi_sq_over_6_h0",
        Inequality,
        s_1,
        PI * PI / 6.0 * a.h0,
        t,
        "",
    ));
    out.push(worst_at_most(
        "own_kernel_le_1_plus_s",
        Inequality,
        a.grids
            .grids
            .iter()
            .zip(&st)
            .map(|(g, s)| (s.n, g.own_singular(0) / PI, 1.0 + s.s)),
        t,
        "",
    ));

    // F matrix.
    let k = gr.open_idx.len();
    let mut off = Vec::new();
    for m in 0..k {
        for n in 0..k {
            if m != n {
                let d = (gr.open_idx[n] - gr.open_idx[m]) as f64;
                off.push((
                    gr.open_idx[m] * 1000 + gr.open_idx[n],
                    gr.f[m][n].abs(),
                    st[n].a / (2.0 * d * d),
                ));
            }
        }
    }
    out.push(worst_at_most(
        "f_offdiagonal",
        Inequality,
        off,
        t,
        "worst index encoded as 1000*m + n",
    ));
    out.push(worst_at_most(
        "f_diagonal_minus_1",
        Inequality,
        (0..k).map(|i| (st[i].n, (gr.f[i][i] - 1.0).abs(), 5.0 * st[i].s)),
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "f_minus_i_hs",
        Inequality,
        gr.f_minus_i_hs,
        PI * qn * qn,
        t,
        "",
    ));
    out.push(CheckResult::at_most(
        "pi_norm_sq_le_pi_over_64",
        Inequality,
        PI * qn * qn,
        PI / 64.0,
        t,
        "",
    ));
    out.push(worst_at_most(
        "alpha_minus_1",
        Inequality,
        (0..k).map(|i| (st[i].n, (gr.alpha[i] - 1.0).abs(), 5.0 * st[i].s)),
        t,
        "",
    ));

    // Gradients of V.
    out.push(worst_at_most(
        "own_v_gradient_le_9h_cubed",
        Inequality,
        (0..k).map(|i| {
            (
                st[i].n,
                (2.0 * st[i].h * gr.omega_tilde1[i]).abs(),
                9.0 * st[i].h.powi(3),
            )
        }),
        t,
        "",
    ));
    let mut cross = Vec::new();
    for (mi, gm) in a.grids.grids.iter().enumerate() {
        for (ni, gn) in a.grids.grids.iter().enumerate() {
            if mi == ni {
                continue;
            }
            let zm = gm.z_crit;
            let lhs = 8.0 * gr.nu[mi].abs() / (3.0 * PI) * gn.integrate(|z, v, _| v.powi(3) / ((z - zm) * (z - zm)));
            let d = (gn.n - gm.n) as f64;
            let rhs = 4.0 / 3.0 * st[mi].h * st[ni].h * st[ni].h * st[ni].a / (d * d);
            cross.push((gm.n * 1000 + gn.n, lhs, rhs));
        }
    }
    out.push(worst_at_most(
        "cross_v_gradient",
        Inequality,
        cross,
        t,
        "worst index encoded as 1000*m + n",
    ));
    out.push(worst_at_most(
        "cross_part_of_v_gradient",
        Inequality,
        (0..k).map(|i| {
            (
                st[i].n,
                (2.0 * st[i].h * gr.omega_tilde2[i]).abs(),
                3.0 * gr.nu[i].abs() * ainf * st[i].s,
            )
        }),
        t,
        "",
    ));
    out.push(worst_at_most(
        "omega2_le_9_half_h_sq",
        Inequality,
        (0..k).map(|i| (st[i].n, gr.omega_tilde2[i], 4.5 * st[i].h * st[i].h)),
        t,
        "height of the same gap m",
    ));
    out.push(worst_at_most(
        "omega2_le_3_half_a_sup_s",
        Inequality,
        (0..k).map(|i| (st[i].n, gr.omega_tilde2[i], 1.5 * ainf * st[i].s)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "omega1_minus_2a",
        Inequality,
        (0..k).map(|i| {
            (
                st[i].n,
                (gr.omega_tilde1[i] - 2.0 * st[i].a).abs(),
                29.0 * st[i].a * st[i].s,
            )
        }),
        t,
        "",
    ));
    out.push(worst_at_most(
        "29_a_s_le_quarter_a",
        Inequality,
        (0..k).map(|i| (st[i].n, 29.0 * st[i].a * st[i].s, st[i].a / 4.0)),
        t,
        "",
    ));
    out.push(worst_at_most(
        "omega_le_3a_plus_2_a_sup_s",
        Inequality,
        (0..k).map(|i| (st[i].n, gr.omega_tilde[i].abs(), 3.0 * st[i].a + 2.0 * ainf * st[i].s)),
        t,
        "",
    ));
    let w_inf = gr.omega_tilde.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    out.push(CheckResult::at_most(
        "omega_sup_le_4_a_sup",
        Inequality,
        w_inf,
        4.0 * ainf,
        t,
        "",
    ));
    out.push(worst_at_most(
        "omega_minus_2a",
        Inequality,
        (0..k).map(|i| {
            (
                st[i].n,
                (gr.omega_tilde[i] - 2.0 * st[i].a).abs(),
                31.0 * ainf * st[i].s,
            )
        }),
        t,
        "",
    ));
    Ok(out)
}

/// `2|sin z| ≥ e^{|Im z|}(1 − e^{−2r})` at seeded points with
/// `dist(z, πℤ) ≥ r` and `|Im z| ≤ 5`; reported at the smallest ratio.
pub fn sine_lower_bound(r: f64, samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, f64)> = None;
    let mut count = 0;
    while count < samples {
        let z = Complex64::new(rng.gen_range(-2.0 * PI..2.0 * PI), rng.gen_range(-5.0..5.0));
        let k = (z.re / PI).round();
        if (z - Complex64::new(k * PI, 0.0)).norm() < r {
            continue;
        }
        count += 1;
        let lhs = z.im.abs().exp() * (1.0 - (-2.0 * r).exp());
        let rhs = 2.0 * z.sin().norm();
        if worst.is_none_or(|(wl, wr)| lhs / rhs > wl / wr) {
            worst = Some((lhs, rhs));
        }
    }
    let (lhs, rhs) = worst.unwrap_or((0.0, 0.0));
    CheckResult::at_most(
        format!("sine_lower_bound r={r}"),
        CheckKind::InternalConsistency,
        lhs,
        rhs,
        1e-14 * rhs,
        &format!("{samples} points, seed {seed}; worst ratio shown"),
    )
}

pub fn check_internal(a: &Analysis) -> Result<Vec<CheckResult>> {
    use CheckKind::*;
    let gr = &a.grads;
    let grids = &a.grids;
    let mut out = Vec::new();

    for (i, g) in grids.grids.iter().enumerate() {
        let lhs = g.own_singular(0) / PI;
        let zm = g.z_crit;
        let rhs = 1.0 + grids.others(g.n, |z, v| v / ((z - zm) * (z - zm))) / PI;
        out.push(CheckResult::equal(
            format!("own_gap_kernel_identity n={}", g.n),
            InternalConsistency,
            lhs,
            rhs,
            QUAD_REL_TOL * rhs.abs(),
            "",
        ));
        out.push(CheckResult::equal(
            format!("nu_times_v2_at_critical n={}", g.n),
            InternalConsistency,
            gr.nu[i] * g.ddv_crit,
            -1.0,
            QUAD_REL_TOL,
            "",
        ));
    }

    for (i, gm) in grids.grids.iter().enumerate() {
        let mut worst: Option<(i64, f64, f64, f64)> = None;
        for gn in grids.grids.iter().filter(|g| g.n != gm.n) {
            let (l, r) = action_derivative_crosscheck(grids, gr.nu[i], gm.n, gn.n)?;
            let rel = (l - r).abs() / l.abs().max(1e-12);
            if worst.is_none_or(|w| rel > w.3) {
                worst = Some((gn.n, l, r, rel));
            }
        }
        if let Some((n, l, r, _)) = worst {
            out.push(CheckResult::equal(
                format!("action_gradient_two_forms m={}", gm.n),
                InternalConsistency,
                l,
                r,
                CROSSCHECK_REL_TOL * l.abs().max(1e-12),
                &format!("worst n = {n}"),
            ));
        }
    }

    let factor: Vec<CheckResult> = grids
        .grids
        .par_iter()
        .map(|g| {
            let gap = a.table.gap(g.n).expect("grid of a tabulated gap");
            let mut worst = (0.0f64, 0.0, 0.0);
            for k in 1..=FACTOR_POINTS {
                let d = g.d_minus + g.width() * k as f64 / (FACTOR_POINTS + 1) as f64;
                let (v, _, _) = v_eval_offset(&a.potential, gap, d)?;
                let (y, _, _) = y_and_derivatives(grids, g.n, d)?;
                let rec = g.half_circle_offset(d) * (1.0 + y);
                let rel = ((v - rec) / v).abs();
                if rel >= worst.0 {
                    worst = (rel, v, rec);
                }
            }
            Ok(CheckResult::equal(
                format!("half_circle_factorization n={}", g.n),
                InternalConsistency,
                worst.1,
                worst.2,
                QUAD_REL_TOL * worst.1.abs(),
                &format!("{FACTOR_POINTS} interior points, worst shown"),
            ))
        })
        .collect::<Result<_>>()?;
    out.extend(factor);

    let w_norm = gr.omega_tilde.iter().map(|w| w * w).sum::<f64>().sqrt();
    out.push(CheckResult::equal(
        "f_solve_residual",
        InternalConsistency,
        gr.solve_residual,
        0.0,
        SOLVE_REL_TOL * w_norm,
        "",
    ));
    let min1 = gr.omega_tilde1.iter().fold(f64::INFINITY, |m, w| m.min(*w));
    let min2 = gr.omega_tilde2.iter().fold(f64::INFINITY, |m, w| m.min(*w));
    if !gr.is_empty() {
        out.push(CheckResult::at_most(
            "omega_tilde1_nonnegative",
            InternalConsistency,
            0.0,
            min1,
            0.0,
            "",
        ));
        out.push(CheckResult::at_most(
            "omega_tilde2_nonnegative",
            InternalConsistency,
            0.0,
            min2,
            0.0,
            "",
        ));
    }

    for (i, &r) in SINE_RADII.iter().enumerate() {
        out.push(sine_lower_bound(r, SINE_SAMPLES, i as u64 + 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialInfo {
    pub source: String,
    pub k_max: usize,
    pub q1: TrigSeries,
    pub q2: TrigSeries,
    pub norm: f64,
    pub small_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: i64,
    pub z_minus: f64,
    pub z_plus: f64,
    pub z_crit: f64,
    pub h: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub s_min: f64,
    pub tail_bound: f64,
    pub gaps: Vec<GapRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct Functionals {
    pub H0_direct: f64,
    pub H1_direct: f64,
    pub H_half: f64,
    pub H_double: f64,
    pub Q0: f64,
    pub Q1: f64,
    pub Q2: f64,
    pub U: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct GradientSummary {
    pub n: Vec<i64>,
    pub nu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega_tilde: Vec<f64>,
    pub dU_dA: Vec<f64>,
    pub Omega: Vec<f64>,
    pub F_minus_I_HS: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub potential: PotentialInfo,
    pub table: TableSummary,
    pub functionals: Functionals,
    pub gradients: GradientSummary,
    pub checks: Vec<CheckResult>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn build(a: &Analysis, source: &str) -> Result<Self> {
        let mut checks = check_identities(a);
        checks.extend(check_estimates(a)?);
        checks.extend(check_internal(a)?);
        let overall_pass = checks
            .iter()
            .filter(|c| matches!(c.kind, CheckKind::Identity | CheckKind::InternalConsistency))
            .all(|c| c.holds);
        Ok(Self {
            potential: potential_info(&a.potential, source),
            table: table_summary(&a.table, &a.actions),
            functionals: Functionals {
                H0_direct: a.h0,
                H1_direct: a.h1,
                H_half: a.h_half,
                H_double: a.h_double,
                Q0: a.q.0,
                Q1: a.q.1,
                Q2: a.q.2,
                U: a.u,
            },
            gradients: GradientSummary {
                n: a.grads.open_idx.clone(),
                nu: a.grads.nu.clone(),
                alpha: a.grads.alpha.clone(),
                omega_tilde: a.grads.omega_tilde.clone(),
                dU_dA: a.grads.du_da.clone(),
                Omega: a.grads.omega.clone(),
                F_minus_I_HS: a.grads.f_minus_i_hs,
            },
            checks,
            overall_pass,
        })
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn potential_info(q: &FourierPotential, source: &str) -> PotentialInfo {
    PotentialInfo {
        source: source.to_string(),
        k_max: q.k_max,
        q1: q.q1.clone(),
        q2: q.q2.clone(),
        norm: q.norm(),
        small_norm: q.norm() <= SMALL_NORM,
    }
}

pub fn table_summary(table: &SpectralTable, actions: &ActionSet) -> TableSummary {
    TableSummary {
        n: table.n_max,
        s_min: table.s_min,
        tail_bound: table.tail_bound,
        gaps: table
            .gaps
            .iter()
            .map(|g| GapRow {
                n: g.n,
                z_minus: g.z_minus,
                z_plus: g.z_plus,
                z_crit: g.z_crit,
                h: g.h,
                a: actions.get(g.n),
                closed: g.closed,
            })
            .collect(),
    }
}

/// Runs the pipeline and the full check battery.
pub fn verify(q: &FourierPotential, cfg: &SpectralConfig, source: &str) -> Result<VerificationReport> {
    let a = Analysis::run(q, cfg)?;
    VerificationReport::build(&a, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::preset;

    fn report(spec: &str, n_max: usize) -> VerificationReport {
        verify(&preset(spec).unwrap(), &SpectralConfig::with_n_max(n_max), spec).unwrap()
    }

    #[test]
    fn semicircle_report() {
        let r = report("constant:0.1", 4);
        assert!(
            r.overall_pass,
            "{:#?}",
            r.checks.iter().filter(|c| !c.holds).collect::<Vec<_>>()
        );
        let printed = r.check("action_le_gap_height_over_pi").unwrap();
        let corrected = r.check("action_le_2_gap_height_over_pi").unwrap();
        assert_eq!(printed.kind, CheckKind::FlaggedDiscrepancy);
        assert!(!printed.holds && corrected.holds);
        let lower = r.check("u_ge_pi_over_6_l2_sq").unwrap();
        assert!((lower.lhs - PI / 6.0 * 1e-4).abs() < 1e-12 && lower.holds);
        let upper = r.check("u_le_2pi_over_3_sqrt_c1_l2_sq").unwrap();
        assert!((upper.rhs - 2.0 * PI / 3.0 * 2f64.sqrt() * 1e-4).abs() < 1e-12);
        let tv = r.check("u_minus_l2_sq_cubic").unwrap();
        assert!(tv.lhs < 1e-12 && tv.holds);
        let half = r.check("hamiltonian_trace_formula_half_normalization").unwrap();
        let full = r.check("hamiltonian_trace_formula").unwrap();
        assert!((half.margin - 5e-5).abs() < 1e-9);
        assert!(full.margin < 1e-9 && half.margin > full.margin);
        assert!((full.rhs - 1e-4).abs() < 1e-9);
    }

    #[test]
    fn zero_report_passes() {
        let r = report("zero", 4);
        assert!(r.overall_pass);
        for name in ["h0_equals_action_sum", "h1_equals_4q1", "hamiltonian_trace_formula"] {
            let c = r.check(name).unwrap();
            assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        }
    }

    #[test]
    fn sine_bound_examples() {
        let z = Complex64::new(0.5, 0.0);
        assert!((2.0 * z.sin().norm() - 0.958851).abs() < 1e-6);
        assert!((1.0 - (-1.0f64).exp() - 0.632121).abs() < 1e-6);
        for r in SINE_RADII {
            assert!(sine_lower_bound(r, SINE_SAMPLES, 3).holds);
        }
    }

    #[test]
    fn check_forms() {
        let c = CheckResult::at_most("x", CheckKind::Inequality, 1.0, 0.9, 0.05, "");
        assert!(!c.holds && (c.margin + 0.1).abs() < 1e-15);
        let c = CheckResult::equal("y", CheckKind::Identity, 1.0, 1.0 + 1e-9, 1e-8, "");
        assert!(c.holds);
        let w = worst_at_most("z", CheckKind::Inequality, vec![(1, 0.0, 1.0), (2, 0.5, 0.6)], 0.0, "");
        assert!(w.notes.contains("worst n = 2"));
    }

    #[test]
    fn report_is_deterministic() {
        let a = report("two_mode", 4).to_json();
        let b = report("two_mode", 4).to_json();
        assert_eq!(a, b);
    }
}
