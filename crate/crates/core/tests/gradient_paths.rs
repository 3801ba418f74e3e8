//! Finite-difference checks of the F matrix and ω̃ along the scaling path
//! `t ↦ t·q`, which moves every open gap at once.

use zs_spectral::potential::preset;
use zs_spectral::verify::Analysis;
use zs_spectral::SpectralConfig;

const EPS: f64 = 1e-4;

struct Path {
    mid: Analysis,
    plus: Analysis,
    minus: Analysis,
}

impl Path {
    fn new(name: &str) -> Self {
        let q = preset(name).unwrap();
        let cfg = SpectralConfig {
            n_max: 8,
            ..SpectralConfig::default()
        };
        let run = |s: f64| Analysis::run(&q.scaled(s), &cfg).unwrap();
        Self {
            mid: run(1.0),
            plus: run(1.0 + EPS),
            minus: run(1.0 - EPS),
        }
    }

    fn rate(&self, f: impl Fn(&Analysis) -> f64) -> f64 {
        (f(&self.plus) - f(&self.minus)) / (2.0 * EPS)
    }

    /// `d(h_m²)/dt` for each open gap of the midpoint.
    fn height_sq_rates(&self) -> Vec<f64> {
        let h = |a: &Analysis, n: i64| a.table.gap(n).unwrap().h;
        self.mid
            .grads
            .open_idx
            .iter()
            .map(|&n| self.rate(|a| h(a, n) * h(a, n)))
            .collect()
    }
}

#[test]
fn f_matrix_predicts_action_rates() {
    let p = Path::new("two_mode");
    let gr = &p.mid.grads;
    assert!(gr.open_idx.len() >= 2);
    let dh2 = p.height_sq_rates();
    for (ni, &n) in gr.open_idx.iter().enumerate() {
        let observed = p.rate(|a| a.actions.get(n));
        let predicted: f64 = (0..dh2.len()).map(|m| gr.f[m][ni] * dh2[m]).sum();
        assert!(
            (predicted - observed).abs() <= 1e-6 * observed.abs(),
            "n = {n}: predicted {predicted:e}, observed {observed:e}"
        );
    }
}

#[test]
fn omega_tilde_predicts_u_rate() {
    for name in ["two_mode", "random_small:3,0.05"] {
        let p = Path::new(name);
        let dh2 = p.height_sq_rates();
        let predicted: f64 = p.mid.grads.omega_tilde.iter().zip(&dh2).map(|(w, d)| w * d).sum();
        let observed = p.rate(|a| a.u);
        assert!(
            (predicted - observed).abs() <= 1e-6 * observed.abs(),
            "{name}: predicted {predicted:e}, observed {observed:e}"
        );
    }
}

#[test]
fn frequencies_predict_u_rate_through_actions() {
    let p = Path::new("two_mode");
    let gr = &p.mid.grads;
    let predicted: f64 = gr
        .open_idx
        .iter()
        .zip(&gr.du_da)
        .map(|(&n, d)| d * p.rate(|a| a.actions.get(n)))
        .sum();
    let observed = p.rate(|a| a.u);
    assert!(
        (predicted - observed).abs() <= 1e-6 * observed.abs(),
        "predicted {predicted:e}, observed {observed:e}"
    );
}
