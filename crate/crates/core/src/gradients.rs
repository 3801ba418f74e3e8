//! Gradients of the actions and of `V` with respect to the squared heights,
//! and the frequencies obtained from them.
//!
//! `F_{m,n} = ∂A_n/∂h_m²` on the open gaps:
//!
//! * `F_{m,n} = −(α_m/π) ∫_{g_n} v/(z − z_m)²` for `m ≠ n`,
//! * `F_{n,n} = α_n (1 + (1/π) ∫_{g∖g_n} v/(z − z_n)²)`,
//!
//! with `α_n = ν_n/h_n`. Then `ω̃ = ∂V/∂h²` and `∂U/∂A` solves `F x = ω̃`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, ZsError};
use crate::quasimomentum::GapGrids;
use crate::spectrum::SpectralTable;

/// `|Δ″(z_n)|` below this makes `ν_n` meaningless.
pub const MIN_DD_DELTA: f64 = 1e-12;

/// Everything derived from `F` and `ω̃`, indexed by open gap.
#[derive(Debug, Clone, Serialize)]
pub struct GradientData {
    pub open_idx: Vec<i64>,
    pub nu: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Row-major, `f[m][n] = F_{m,n}`.
    pub f: Vec<Vec<f64>>,
    pub omega_tilde: Vec<f64>,
    pub omega_tilde1: Vec<f64>,
    pub omega_tilde2: Vec<f64>,
    pub du_da: Vec<f64>,
    pub omega: Vec<f64>,
    /// `‖F − I‖` in the Hilbert–Schmidt norm.
    pub f_minus_i_hs: f64,
    /// `‖F·∂U − ω̃‖₂`.
    pub solve_residual: f64,
}

impl GradientData {
    pub fn position(&self, n: i64) -> Option<usize> {
        self.open_idx.iter().position(|&k| k == n)
    }

    pub fn is_empty(&self) -> bool {
        self.open_idx.is_empty()
    }
}

/// `ν_n = (−1)^{n−1} sinh h_n / Δ″(z_n)` and `α_n = ν_n/h_n` for the open gaps.
pub fn nu_alpha(table: &SpectralTable) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nu = Vec::new();
    let mut alpha = Vec::new();
    for g in table.open_gaps() {
        let dd = g.crit.dd_delta;
        if dd.abs() < MIN_DD_DELTA {
            return Err(ZsError::DegenerateCritical { n: g.n, dd_delta: dd });
        }
        let v = -g.sign() * g.h.sinh() / dd;
        nu.push(v);
        alpha.push(v / g.h);
    }
    Ok((nu, alpha))
}

/// `∫_{g_n} v/(z − z_m)²` for every ordered pair of open gaps (zero on the diagonal).
fn cross_integrals(grids: &GapGrids) -> Vec<Vec<f64>> {
    grids
        .grids
        .par_iter()
        .map(|gm| {
            let zm = gm.z_crit;
            grids
                .grids
                .iter()
                .map(|gn| {
                    if gn.n == gm.n {
                        0.0
                    } else {
                        gn.integrate(|z, v, _| v / ((z - zm) * (z - zm)))
                    }
                })
                .collect()
        })
        .collect()
}

/// The F matrix over the open gaps of `grids`.
pub fn f_matrix(grids: &GapGrids, alpha: &[f64]) -> DMatrix<f64> {
    let cross = cross_integrals(grids);
    let k = grids.len();
    DMatrix::from_fn(k, k, |m, n| {
        if m == n {
            let s: f64 = cross[m].iter().sum();
            alpha[m] * (1.0 + s / PI)
        } else {
            -alpha[m] / PI * cross[m][n]
        }
    })
}

/// `(ω̃, ω̃₁, ω̃₂)` with `ω̃₁ = (4α_m/π) ∫_{g_m} v²v′/(z_m − z)` and
/// `ω̃₂ = (4α_m/3π) ∫_{g∖g_m} v³/(z − z_m)²`.
pub fn omega_tilde(grids: &GapGrids, alpha: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let parts: Vec<(f64, f64)> = grids
        .grids
        .par_iter()
        .zip(alpha.par_iter())
        .map(|(g, &a)| {
            let zm = g.z_crit;
            let w1 = 4.0 * a / PI * g.own_singular(2);
            let w2 = 4.0 * a / (3.0 * PI) * grids.others(g.n, |z, v| v * v * v / ((z - zm) * (z - zm)));
            (w1, w2)
        })
        .collect();
    let w1: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let w2: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let w = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
    (w, w1, w2)
}

/// Solves `F x = ω̃` by LU with partial pivoting.
pub fn solve(f: &DMatrix<f64>, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let b = DVector::from_column_slice(rhs);
    let x = f.clone().lu().solve(&b).ok_or(ZsError::SingularMatrix)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ZsError::SingularMatrix);
    }
    let residual = (f * &x - &b).norm();
    Ok((x.as_slice().to_vec(), residual))
}

/// `ν`, `α`, `F`, `ω̃`, `∂U/∂A` and `Ω_n = (2πn)² + 4H_0 − ∂_nU`.
pub fn gradient_data(table: &SpectralTable, grids: &GapGrids, h0_direct: f64) -> Result<GradientData> {
    let open_idx: Vec<i64> = grids.grids.iter().map(|g| g.n).collect();
    let (nu, alpha) = nu_alpha(table)?;
    let f = f_matrix(grids, &alpha);
    let (omega_tilde, omega_tilde1, omega_tilde2) = omega_tilde(grids, &alpha);
    let (du_da, solve_residual) = if open_idx.is_empty() {
        (Vec::new(), 0.0)
    } else {
        solve(&f, &omega_tilde)?
    };
    let omega = open_idx
        .iter()
        .zip(&du_da)
        .map(|(&n, d)| (2.0 * PI * n as f64).powi(2) + 4.0 * h0_direct - d)
        .collect();
    let k = open_idx.len();
    let f_minus_i_hs = (&f - DMatrix::<f64>::identity(k, k)).norm();
    let f = (0..k).map(|m| (0..k).map(|n| f[(m, n)]).collect()).collect();
    Ok(GradientData {
        open_idx,
        nu,
        alpha,
        f,
        omega_tilde,
        omega_tilde1,
        omega_tilde2,
        du_da,
        omega,
        f_minus_i_hs,
        solve_residual,
    })
}

/// `∇_m A_n` two ways, `m ≠ n`:
/// `(2ν_m/π) ∫_{g_n} v′/(z_m − z)` and `−(2ν_m/π) ∫_{g_n} v/(z − z_m)²`.
///
/// In the first form the kernel is taken relative to its value at the gap
/// midpoint. This leaves the integral unchanged (`∫_{g_n} v′ = 0`) but removes
/// the cancellation that dominates on gaps with tiny heights.
pub fn action_derivative_crosscheck(grids: &GapGrids, nu_m: f64, m: i64, n: i64) -> Result<(f64, f64)> {
    if m == n {
        return Err(ZsError::Config("crosscheck needs two distinct gaps".into()));
    }
    let gm = grids.get(m).ok_or(ZsError::ClosedGap { n: m })?;
    let gn = grids.get(n).ok_or(ZsError::ClosedGap { n })?;
    let zm = gm.z_crit;
    let c = 1.0 / (zm - gn.base - 0.5 * (gn.d_minus + gn.d_plus));
    let lhs = 2.0 * nu_m / PI * gn.integrate(|z, _, dv| dv * (1.0 / (zm - z) - c));
    let rhs = -2.0 * nu_m / PI * gn.integrate(|z, v, _| v / ((z - zm) * (z - zm)));
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpectralConfig;
    use crate::potential::preset;
    use crate::quasimomentum::ActionSet;
    use crate::spectrum::compute_table;

    fn setup(spec: &str, n_max: usize) -> (SpectralTable, GapGrids, f64) {
        let q = preset(spec).unwrap();
        let table = compute_table(&q, &SpectralConfig::with_n_max(n_max)).unwrap();
        let grids = GapGrids::build(&q, &table).unwrap();
        (table, grids, q.direct_h0())
    }

    #[test]
    fn semicircle_gradients() {
        let (table, grids, h0) = setup("constant:0.1", 4);
        let g = gradient_data(&table, &grids, h0).unwrap();
        assert_eq!(g.open_idx, vec![0]);
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(g.nu[0], 0.1) < 1e-7, "{}", g.nu[0]);
        assert!(rel(g.alpha[0], 1.0) < 1e-7);
        assert!(rel(g.f[0][0], 1.0) < 1e-7);
        assert!(rel(g.omega_tilde[0], 0.02) < 1e-7, "{}", g.omega_tilde[0]);
        assert_eq!(g.omega_tilde2[0], 0.0);
        assert!(rel(g.du_da[0], 0.02) < 1e-7);
        assert!(rel(g.omega[0], 0.02) < 1e-7, "{}", g.omega[0]);
    }

    #[test]
    fn zero_potential_has_empty_system() {
        let (table, grids, h0) = setup("zero", 4);
        let g = gradient_data(&table, &grids, h0).unwrap();
        assert!(g.is_empty());
        assert!(g.du_da.is_empty() && g.omega.is_empty());
        assert_eq!(g.f_minus_i_hs, 0.0);
    }

    #[test]
    fn two_mode_structure() {
        let (table, grids, h0) = setup("two_mode", 8);
        let g = gradient_data(&table, &grids, h0).unwrap();
        let norm = g.omega_tilde.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(g.solve_residual <= 1e-12 * norm);
        for i in 0..g.open_idx.len() {
            assert!(g.omega_tilde1[i] >= 0.0 && g.omega_tilde2[i] >= 0.0);
            let grid = &grids.grids[i];
            assert!((g.nu[i] * grid.ddv_crit + 1.0).abs() < 1e-6);
            assert!(g.nu[i] * g.nu[i] <= grid.h * grid.h * (1.0 + 1e-12));
        }
        assert!(g.f_minus_i_hs < 0.05);
    }

    #[test]
    fn crosscheck_agrees_on_two_mode() {
        let (table, grids, _) = setup("two_mode", 6);
        let (nu, _) = nu_alpha(&table).unwrap();
        let idx: Vec<i64> = grids.grids.iter().map(|g| g.n).collect();
        for (i, &m) in idx.iter().enumerate() {
            for &n in &idx {
                if m == n {
                    continue;
                }
                let (l, r) = action_derivative_crosscheck(&grids, nu[i], m, n).unwrap();
                assert!(
                    (l - r).abs() <= 1e-7 * l.abs().max(1e-12),
                    "m={m} n={n}: {l:e} vs {r:e}"
                );
                assert!(r * nu[i] <= 0.0);
                if l.abs() > 1e-12 {
                    assert!(l * nu[i] < 0.0, "m={m} n={n}");
                }
            }
        }
        assert!(action_derivative_crosscheck(&grids, nu[0], idx[0], idx[0]).is_err());
    }

    #[test]
    fn degenerate_critical_point_is_rejected() {
        let q = preset("constant:0.1").unwrap();
        let mut table = compute_table(&q, &SpectralConfig::with_n_max(2)).unwrap();
        let g = table.gaps.iter_mut().find(|g| g.n == 0).unwrap();
        g.crit.dd_delta = 1e-14;
        assert!(matches!(
            nu_alpha(&table),
            Err(ZsError::DegenerateCritical { n: 0, .. })
        ));
    }

    #[test]
    fn solve_recovers_known_vector() {
        let f = DMatrix::from_row_slice(3, 3, &[1.0, 0.01, -0.02, 0.003, 1.1, 0.0, 0.0, 0.05, 0.9]);
        let x = DVector::from_column_slice(&[0.3, -1.0, 2.0]);
        let b = &f * &x;
        let (y, res) = solve(&f, b.as_slice()).unwrap();
        for i in 0..3 {
            assert!((y[i] - x[i]).abs() < 1e-14);
        }
        assert!(res < 1e-14);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&singular, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn omega_tilde1_close_to_twice_action() {
        let q = preset("single_mode").unwrap();
        let table = compute_table(&q, &SpectralConfig::with_n_max(4)).unwrap();
        let grids = GapGrids::build(&q, &table).unwrap();
        let a = ActionSet::compute(&q, &table, &grids).unwrap();
        let g = gradient_data(&table, &grids, q.direct_h0()).unwrap();
        for (i, &n) in g.open_idx.iter().enumerate() {
            let rel = (g.omega_tilde1[i] - 2.0 * a.get(n)).abs() / a.get(n);
            assert!(rel < 0.05, "n={n} rel={rel}");
        }
    }
}
