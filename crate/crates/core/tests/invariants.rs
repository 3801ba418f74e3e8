//! Property suites over random small potentials.

use proptest::prelude::*;
use zs_spectral::potential::Preset;
use zs_spectral::quasimomentum::{comparison_s, y_maxima};
use zs_spectral::verify::{check_identities, check_internal, sine_lower_bound, Analysis};
use zs_spectral::{lyapunov, FourierPotential, SpectralConfig};

fn analysis(seed: u64, amp: f64) -> Analysis {
    let q = Preset::RandomSmall { seed, amp }.build().unwrap();
    Analysis::run(
        &q,
        &SpectralConfig {
            n_max: 8,
            ..SpectralConfig::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn gap_edges_and_critical_points(seed in 100u64..10_000, amp in 0.005f64..0.1) {
        let a = analysis(seed, amp);
        let ode = a.table.config.ode;
        for g in a.table.open_gaps() {
            prop_assert!(g.crit.d_delta.abs() <= 1e-10, "n = {}: {:e}", g.n, g.crit.d_delta);
            for z in [g.z_minus, g.z_plus] {
                let l = lyapunov(&a.potential, z, &ode).unwrap();
                prop_assert!((g.sign() * l.delta - 1.0).abs() <= 1e-10, "n = {}", g.n);
            }
            prop_assert!(g.z_minus <= g.z_crit && g.z_crit <= g.z_plus);
            prop_assert!(g.width() <= 2.0 * g.h + 1e-9);
        }
    }

    #[test]
    fn quasimomentum_bounds(seed in 100u64..10_000, amp in 0.005f64..0.1) {
        let a = analysis(seed, amp);
        let s = comparison_s(&a.table, &a.actions);
        for g in &a.grids.grids {
            prop_assert!(g.v.iter().all(|&v| v >= 0.0 && v <= g.h * (1.0 + 1e-9)), "n = {}", g.n);
            let (m, _, _) = y_maxima(&a.grids, g.n).unwrap();
            let sn = s[a.actions.n.iter().position(|&k| k == g.n).unwrap()];
            prop_assert!(m <= sn + 1e-8, "n = {}: M = {m:e}, S = {sn:e}", g.n);
        }
    }

    #[test]
    fn identities_and_internal_checks_hold(seed in 100u64..10_000, amp in 0.005f64..0.1) {
        let a = analysis(seed, amp);
        for c in check_identities(&a).into_iter().chain(check_internal(&a).unwrap()) {
            if c.kind != zs_spectral::verify::CheckKind::FlaggedDiscrepancy {
                prop_assert!(c.holds, "{}: margin {:e}, tol {:e}", c.name, c.margin, c.tolerance);
            }
        }
    }

    #[test]
    fn potential_json_round_trip(seed in 0u64..10_000, amp in 0.0f64..0.125) {
        let q = Preset::RandomSmall { seed, amp }.build().unwrap();
        prop_assert_eq!(FourierPotential::from_json(&q.to_json()).unwrap(), q);
    }

    #[test]
    fn sine_bound_any_radius(r in 0.01f64..std::f64::consts::FRAC_PI_2, seed in 0u64..1000) {
        prop_assert!(sine_lower_bound(r, 200, seed).holds);
    }
}
