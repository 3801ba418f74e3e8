//! Gauss–Legendre rules and the cosine substitution used for gap integrals.
//!
//! On a gap `(z⁰ − r, z⁰ + r)` we write `z = z⁰ + r cos θ`, so that
//! `∫ f(z) dz = ∫₀^π f(z⁰ + r cos θ) r sin θ dθ`. Square-root behavior of the
//! integrand at the edges becomes analytic in `θ`.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point rule on `[−1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(t), P_n'(t))` by the three-term recurrence.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule in `θ ∈ (0, π)`.
#[derive(Debug, Clone)]
pub struct ThetaRule {
    pub theta: Vec<f64>,
    pub weight: Vec<f64>,
}

impl ThetaRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let theta = x.iter().map(|&xi| 0.5 * PI * (xi + 1.0)).collect();
        let weight = w.iter().map(|&wi| 0.5 * PI * wi).collect();
        Self { theta, weight }
    }

    /// Points `z_i` and `dz`-weights for the interval `[lo, hi]`.
    pub fn map(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let r = 0.5 * (hi - lo);
        // Measured from the nearer edge to keep resolution at the ends.
        let z = self
            .theta
            .iter()
            .map(|&t| {
                if t < 0.5 * PI {
                    hi - 2.0 * r * (0.5 * t).sin().powi(2)
                } else {
                    lo + 2.0 * r * (0.5 * t).cos().powi(2)
                }
            })
            .collect();
        let dz = self
            .theta
            .iter()
            .zip(&self.weight)
            .map(|(t, w)| r * t.sin() * w)
            .collect();
        (z, dz)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}
