//! Real trigonometric-polynomial potentials `q = (q1, q2)` on the unit circle.
//!
//! Each component is stored as
//! `q_j(x) = a_j[0] + Σ_{k=1..k_max} (a_j[k] cos 2πkx + b_j[k] sin 2πkx)`,
//! so every direct integral (`H0`, `H1`, `H`) and every Fourier
//! coefficient has an exact finite expression.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsError};

/// Largest norm `‖q‖` for which the small-norm estimates apply.
pub const SMALL_NORM: f64 = 0.125;

/// Harmonic count used by the `random_small` preset.
pub const RANDOM_K_MAX: usize = 3;

/// Cosine/sine coefficients of one real component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    /// `cos[k]` for `k = 0..=k_max`; `cos[0]` is the mean.
    pub cos: Vec<f64>,
    /// `sin[k-1]` for `k = 1..=k_max`.
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn zeros(k_max: usize) -> Self {
        Self {
            cos: vec![0.0; k_max + 1],
            sin: vec![0.0; k_max],
        }
    }

    fn k_max(&self) -> usize {
        self.sin.len()
    }

    /// Value at `x` given `cos 2πkx`, `sin 2πkx` tables (index `k`).
    #[inline]
    fn eval_tables(&self, cos_k: &[f64], sin_k: &[f64]) -> f64 {
        let mut acc = self.cos[0];
        for k in 1..=self.k_max() {
            acc += self.cos[k] * cos_k[k] + self.sin[k - 1] * sin_k[k];
        }
        acc
    }

    #[inline]
    fn eval_derivative_tables(&self, cos_k: &[f64], sin_k: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 1..=self.k_max() {
            let w = 2.0 * PI * k as f64;
            acc += w * (self.sin[k - 1] * cos_k[k] - self.cos[k] * sin_k[k]);
        }
        acc
    }

    /// `∫_0^1 f² dx` by Parseval.
    fn mean_square(&self) -> f64 {
        let osc: f64 = self.cos.iter().skip(1).chain(self.sin.iter()).map(|c| c * c).sum();
        self.cos[0] * self.cos[0] + 0.5 * osc
    }

    /// `∫_0^1 f'² dx` by Parseval.
    fn derivative_mean_square(&self) -> f64 {
        (1..=self.k_max())
            .map(|k| {
                let w = 2.0 * PI * k as f64;
                0.5 * w * w * (self.cos[k] * self.cos[k] + self.sin[k - 1] * self.sin[k - 1])
            })
            .sum()
    }

    /// Complex Fourier coefficient `∫ f e^{-2πinx} dx` of this real series.
    fn complex_coeff(&self, n: i64) -> Complex64 {
        let k = n.unsigned_abs() as usize;
        if k == 0 {
            return Complex64::new(self.cos[0], 0.0);
        }
        if k > self.k_max() {
            return Complex64::new(0.0, 0.0);
        }
        let (a, b) = (self.cos[k], self.sin[k - 1]);
        if n > 0 {
            Complex64::new(0.5 * a, -0.5 * b)
        } else {
            Complex64::new(0.5 * a, 0.5 * b)
        }
    }
}

/// Periodic potential `q = (q1, q2)` as a pair of real trigonometric polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierPotential {
    pub k_max: usize,
    pub q1: TrigSeries,
    pub q2: TrigSeries,
}

/// Scratch tables for `cos 2πkx`, `sin 2πkx`, reused across evaluations.
#[derive(Debug, Clone)]
pub struct TrigTables {
    cos_k: Vec<f64>,
    sin_k: Vec<f64>,
}

impl TrigTables {
    pub fn new(k_max: usize) -> Self {
        Self {
            cos_k: vec![0.0; k_max + 1],
            sin_k: vec![0.0; k_max + 1],
        }
    }

    #[inline]
    fn fill(&mut self, x: f64) {
        let (s1, c1) = (2.0 * PI * x).sin_cos();
        self.cos_k[0] = 1.0;
        self.sin_k[0] = 0.0;
        for k in 1..self.cos_k.len() {
            let (c, s) = (self.cos_k[k - 1], self.sin_k[k - 1]);
            self.cos_k[k] = c * c1 - s * s1;
            self.sin_k[k] = s * c1 + c * s1;
        }
    }
}

impl FourierPotential {
    pub fn zero(k_max: usize) -> Self {
        Self {
            k_max,
            q1: TrigSeries::zeros(k_max),
            q2: TrigSeries::zeros(k_max),
        }
    }

    /// Checks array lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("q1", &self.q1), ("q2", &self.q2)] {
            if s.cos.len() != self.k_max + 1 {
                return Err(ZsError::Potential(format!(
                    "{name}.cos has length {}, expected k_max + 1 = {}",
                    s.cos.len(),
                    self.k_max + 1
                )));
            }
            if s.sin.len() != self.k_max {
                return Err(ZsError::Potential(format!(
                    "{name}.sin has length {}, expected k_max = {}",
                    s.sin.len(),
                    self.k_max
                )));
            }
            if s.cos.iter().chain(&s.sin).any(|c| !c.is_finite()) {
                return Err(ZsError::Potential(format!("{name} has non-finite coefficients")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let q: Self = serde_json::from_str(text).map_err(|e| ZsError::Potential(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("potential serializes")
    }

    pub fn tables(&self) -> TrigTables {
        TrigTables::new(self.k_max)
    }

    /// `(q1(x), q2(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let mut t = self.tables();
        self.eval_with(&mut t, x)
    }

    /// Allocation-free evaluation using caller-owned tables.
    #[inline]
    pub fn eval_with(&self, t: &mut TrigTables, x: f64) -> (f64, f64) {
        t.fill(x);
        (
            self.q1.eval_tables(&t.cos_k, &t.sin_k),
            self.q2.eval_tables(&t.cos_k, &t.sin_k),
        )
    }

    /// `(q1'(x), q2'(x))`.
    pub fn eval_derivative(&self, x: f64) -> (f64, f64) {
        let mut t = self.tables();
        t.fill(x);
        (
            self.q1.eval_derivative_tables(&t.cos_k, &t.sin_k),
            self.q2.eval_derivative_tables(&t.cos_k, &t.sin_k),
        )
    }

    /// `H0 = ‖q‖² = ∫(q1² + q2²)`.
    pub fn direct_h0(&self) -> f64 {
        self.q1.mean_square() + self.q2.mean_square()
    }

    pub fn norm(&self) -> f64 {
        self.direct_h0().sqrt()
    }

    /// `H1 = ∫(q2' q1 − q1' q2)`, which reduces to `Σ 2πk (a1_k b2_k − a2_k b1_k)`.
    pub fn direct_h1(&self) -> f64 {
        (1..=self.k_max)
            .map(|k| {
                let w = 2.0 * PI * k as f64;
                w * (self.q1.cos[k] * self.q2.sin[k - 1] - self.q2.cos[k] * self.q1.sin[k - 1])
            })
            .sum()
    }

    /// `∫|q'|²` by Parseval.
    pub fn derivative_norm_sq(&self) -> f64 {
        self.q1.derivative_mean_square() + self.q2.derivative_mean_square()
    }

    /// `∫|q|⁴`, exact for the degree-`4 k_max` integrand on `4 k_max + 8` equispaced nodes.
    pub fn quartic_integral(&self) -> f64 {
        let nodes = 4 * self.k_max + 8;
        let mut t = self.tables();
        let sum: f64 = (0..nodes)
            .map(|i| {
                let (a, b) = self.eval_with(&mut t, i as f64 / nodes as f64);
                let m = a * a + b * b;
                m * m
            })
            .sum();
        sum / nodes as f64
    }

    /// Returns `(h_half, h_double)` with `h_half = ½∫(|q'|² + |q|⁴)` and `h_double = 2 h_half`.
    pub fn direct_h(&self) -> (f64, f64) {
        let h_double = self.derivative_norm_sq() + self.quartic_integral();
        (0.5 * h_double, h_double)
    }

    /// `q̂_n = ∫ (q1 + i q2) e^{-2πinx} dx`.
    pub fn fourier_coeff(&self, n: i64) -> Complex64 {
        let c1 = self.q1.complex_coeff(n);
        let c2 = self.q2.complex_coeff(n);
        c1 + Complex64::new(0.0, 1.0) * c2
    }

    /// Multiplies every coefficient by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let scale = |t: &TrigSeries| TrigSeries {
            cos: t.cos.iter().map(|c| c * s).collect(),
            sin: t.sin.iter().map(|c| c * s).collect(),
        };
        Self {
            k_max: self.k_max,
            q1: scale(&self.q1),
            q2: scale(&self.q2),
        }
    }
}

/// Named presets understood by [`preset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Zero,
    /// `q1 ≡ c`.
    Constant(f64),
    /// `q1 = ε cos 2πx`.
    SingleMode(f64),
    /// `q1 = ε1 cos 2πx`, `q2 = ε2 sin 4πx`.
    TwoMode(f64, f64),
    /// Seeded random coefficients with `k_max = 3`, rescaled to `‖q‖ = amp`.
    RandomSmall {
        seed: u64,
        amp: f64,
    },
}

pub const DEFAULT_CONSTANT: f64 = 0.1;
pub const DEFAULT_SINGLE_MODE: f64 = 0.05;
pub const DEFAULT_TWO_MODE: (f64, f64) = (0.05, 0.03);
pub const DEFAULT_RANDOM_AMP: f64 = 0.05;

impl Preset {
    /// Parses `NAME[:p1[,p2]]`. `seed`/`amp` supply `random_small` parameters
    /// when they are not given inline.
    pub fn parse(spec: &str, seed: Option<u64>, amp: Option<f64>) -> Result<Self> {
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (spec, None),
        };
        let nums: Vec<f64> = match params {
            Some(p) if !p.is_empty() => p
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| ZsError::Potential(format!("bad preset parameter `{s}`")))
                })
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        let arg = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        let preset = match name {
            "zero" => Preset::Zero,
            "constant" => Preset::Constant(arg(0, DEFAULT_CONSTANT)),
            "single_mode" => Preset::SingleMode(arg(0, DEFAULT_SINGLE_MODE)),
            "two_mode" => Preset::TwoMode(arg(0, DEFAULT_TWO_MODE.0), arg(1, DEFAULT_TWO_MODE.1)),
            "random_small" => {
                let seed = match nums.first() {
                    Some(s) if s.fract() == 0.0 && *s >= 0.0 => *s as u64,
                    Some(s) => return Err(ZsError::Potential(format!("bad random_small seed {s}"))),
                    None => seed.unwrap_or(0),
                };
                let amp = nums.get(1).copied().or(amp).unwrap_or(DEFAULT_RANDOM_AMP);
                Preset::RandomSmall { seed, amp }
            }
            other => return Err(ZsError::UnknownPreset(other.to_string())),
        };
        if nums.len() > preset.arity() {
            return Err(ZsError::Potential(format!(
                "preset `{name}` takes at most {} parameters",
                preset.arity()
            )));
        }
        Ok(preset)
    }

    /// The same family with its amplitude parameter set to `amp`. Two-mode
    /// presets keep the ratio of their two coefficients.
    pub fn with_amplitude(&self, amp: f64) -> Result<Self> {
        Ok(match *self {
            Preset::Zero => return Err(ZsError::Potential("the zero preset has no amplitude".into())),
            Preset::Constant(_) => Preset::Constant(amp),
            Preset::SingleMode(_) => Preset::SingleMode(amp),
            Preset::TwoMode(e1, e2) => {
                if e1 == 0.0 {
                    Preset::TwoMode(0.0, amp)
                } else {
                    Preset::TwoMode(amp, amp * e2 / e1)
                }
            }
            Preset::RandomSmall { seed, .. } => Preset::RandomSmall { seed, amp },
        })
    }

    fn arity(&self) -> usize {
        match self {
            Preset::Zero => 0,
            Preset::Constant(_) | Preset::SingleMode(_) => 1,
            Preset::TwoMode(..) | Preset::RandomSmall { .. } => 2,
        }
    }

    pub fn build(&self) -> Result<FourierPotential> {
        let q = match *self {
            Preset::Zero => FourierPotential::zero(0),
            Preset::Constant(c) => {
                let mut q = FourierPotential::zero(0);
                q.q1.cos[0] = c;
                q
            }
            Preset::SingleMode(eps) => {
                let mut q = FourierPotential::zero(1);
                q.q1.cos[1] = eps;
                q
            }
            Preset::TwoMode(e1, e2) => {
                let mut q = FourierPotential::zero(2);
                q.q1.cos[1] = e1;
                q.q2.sin[1] = e2;
                q
            }
            Preset::RandomSmall { seed, amp } => random_small(seed, amp)?,
        };
        q.validate()?;
        Ok(q)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Zero => write!(f, "zero"),
            Preset::Constant(c) => write!(f, "constant:{c}"),
            Preset::SingleMode(e) => write!(f, "single_mode:{e}"),
            Preset::TwoMode(a, b) => write!(f, "two_mode:{a},{b}"),
            Preset::RandomSmall { seed, amp } => write!(f, "random_small:{seed},{amp}"),
        }
    }
}

impl FromStr for Preset {
    type Err = ZsError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::parse(s, None, None)
    }
}

/// Convenience wrapper: `preset("constant:0.1")`.
pub fn preset(spec: &str) -> Result<FourierPotential> {
    spec.parse::<Preset>()?.build()
}

fn random_small(seed: u64, amp: f64) -> Result<FourierPotential> {
    if !amp.is_finite() || !(0.0..=SMALL_NORM).contains(&amp) {
        return Err(ZsError::Potential(format!(
            "random_small amplitude {amp} must lie in [0, 1/8]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = FourierPotential::zero(RANDOM_K_MAX);
    for series in [&mut q.q1, &mut q.q2] {
        for (k, c) in series.cos.iter_mut().enumerate() {
            *c = rng.gen_range(-1.0..1.0) / (1.0 + k as f64);
        }
        for (k, c) in series.sin.iter_mut().enumerate() {
            *c = rng.gen_range(-1.0..1.0) / (2.0 + k as f64);
        }
    }
    let norm = q.norm();
    if norm == 0.0 {
        return Ok(q);
    }
    Ok(q.scaled(amp / norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(n: usize, f: impl Fn(f64) -> f64) -> f64 {
        (0..n).map(|i| f(i as f64 / n as f64)).sum::<f64>() / n as f64
    }

    fn circular(eps: f64) -> FourierPotential {
        let mut q = FourierPotential::zero(1);
        q.q1.cos[1] = eps;
        q.q2.sin[0] = eps;
        q
    }

    #[test]
    fn eval_examples() {
        let c = preset("constant:0.1").unwrap();
        assert_eq!(c.eval(0.37), (0.1, 0.0));
        assert_eq!(preset("zero").unwrap().eval(0.81), (0.0, 0.0));
        let mut q = FourierPotential::zero(1);
        q.q1.cos[1] = 1.0;
        let (a, b) = q.eval(0.25);
        assert!(a.abs() < 1e-15 && b == 0.0);
    }

    #[test]
    fn h0_examples() {
        assert!((preset("constant:0.1").unwrap().direct_h0() - 0.01).abs() < 1e-17);
        assert_eq!(preset("zero").unwrap().direct_h0(), 0.0);
        assert!((circular(0.3).direct_h0() - 0.09).abs() < 1e-16);
    }

    #[test]
    fn h1_matches_quadrature() {
        let eps = 0.07;
        let q = circular(eps);
        let oracle = trapezoid(4096, |x| {
            let (a, b) = q.eval(x);
            let (da, db) = q.eval_derivative(x);
            db * a - da * b
        });
        assert!((oracle - 2.0 * PI * eps * eps).abs() < 1e-14);
        assert!((q.direct_h1() - oracle).abs() < 1e-12);
        assert_eq!(preset("constant:0.1").unwrap().direct_h1(), 0.0);
        assert_eq!(preset("single_mode:0.2").unwrap().direct_h1(), 0.0);

        let r = preset("random_small:3,0.1").unwrap();
        let oracle = trapezoid(4096, |x| {
            let (a, b) = r.eval(x);
            let (da, db) = r.eval_derivative(x);
            db * a - da * b
        });
        assert!((r.direct_h1() - oracle).abs() < 1e-10);
    }

    #[test]
    fn hamiltonian_examples() {
        let (half, double) = preset("constant:0.1").unwrap().direct_h();
        assert!((half - 5.0e-5).abs() < 1e-18);
        assert!((double - 1.0e-4).abs() < 1e-18);
        assert_eq!(preset("zero").unwrap().direct_h(), (0.0, 0.0));

        let q = preset("single_mode:0.05").unwrap();
        let oracle = 0.5
            * trapezoid(10_000, |x| {
                let (a, b) = q.eval(x);
                let (da, db) = q.eval_derivative(x);
                da * da + db * db + (a * a + b * b).powi(2)
            });
        assert!((q.direct_h().0 - oracle).abs() < 1e-12);
    }

    #[test]
    fn fourier_coefficients() {
        let c = preset("constant:0.1").unwrap();
        assert_eq!(c.fourier_coeff(0), Complex64::new(0.1, 0.0));
        assert_eq!(c.fourier_coeff(3), Complex64::new(0.0, 0.0));
        let q = preset("single_mode:0.05").unwrap();
        assert!((q.fourier_coeff(1) - Complex64::new(0.025, 0.0)).norm() < 1e-17);

        let r = preset("random_small:11,0.1").unwrap();
        for n in -5..=5 {
            let oracle: Complex64 = (0..4096)
                .map(|i| {
                    let x = i as f64 / 4096.0;
                    let (a, b) = r.eval(x);
                    Complex64::new(a, b) * Complex64::from_polar(1.0, -2.0 * PI * n as f64 * x)
                })
                .sum::<Complex64>()
                / 4096.0;
            assert!((r.fourier_coeff(n) - oracle).norm() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn presets() {
        let c = preset("constant:0.1").unwrap();
        assert_eq!(c.q1.cos, vec![0.1]);
        assert!(preset("zero").unwrap().q1.cos.iter().all(|&x| x == 0.0));
        let a = preset("random_small:7,0.05").unwrap();
        let b = Preset::parse("random_small", Some(7), Some(0.05))
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(a, b);
        assert!(a.direct_h0() <= SMALL_NORM * SMALL_NORM);
        assert!((a.norm() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn amplitude_families() {
        assert_eq!(
            Preset::SingleMode(0.05).with_amplitude(0.01).unwrap(),
            Preset::SingleMode(0.01)
        );
        assert_eq!(
            Preset::TwoMode(0.05, 0.03).with_amplitude(0.1).unwrap(),
            Preset::TwoMode(0.1, 0.1 * 0.03 / 0.05)
        );
        assert_eq!(
            Preset::RandomSmall { seed: 3, amp: 0.05 }.with_amplitude(0.02).unwrap(),
            Preset::RandomSmall { seed: 3, amp: 0.02 }
        );
        assert!(Preset::Zero.with_amplitude(0.1).is_err());
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(preset("sawtooth"), Err(ZsError::UnknownPreset(_))));
        assert!(preset("random_small:1,0.2").is_err());
        assert!(preset("constant:abc").is_err());
        assert!(preset("zero:1").is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let q = preset("random_small:5,0.04").unwrap();
        assert_eq!(FourierPotential::from_json(&q.to_json()).unwrap(), q);
        let bad = r#"{"k_max": 2, "q1": {"cos": [0.1], "sin": []}, "q2": {"cos": [0,0,0], "sin": [0,0]}}"#;
        assert!(FourierPotential::from_json(bad).is_err());
        assert!(FourierPotential::from_json("{not json").is_err());
    }

    proptest::proptest! {
        #[test]
        fn parseval_matches_trapezoid(seed in 0u64..500, amp in 0.0f64..0.125) {
            let q = Preset::RandomSmall { seed, amp }.build().unwrap();
            let n = 2 * q.k_max + 2;
            let quad = trapezoid(n, |x| { let (a, b) = q.eval(x); a * a + b * b });
            proptest::prop_assert!((q.direct_h0() - quad).abs() < 1e-12);
            proptest::prop_assert_eq!(q.fourier_coeff(q.k_max as i64 + 1), Complex64::new(0.0, 0.0));
            proptest::prop_assert_eq!(q.fourier_coeff(-(q.k_max as i64) - 2), Complex64::new(0.0, 0.0));
        }
    }
}
