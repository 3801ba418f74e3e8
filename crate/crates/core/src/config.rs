use serde::Serialize;

use crate::error::{Result, ZsError};
use crate::ode::IntegratorConfig;

pub const DEFAULT_N_MAX: usize = 16;
pub const DEFAULT_QUAD_NODES: usize = 128;
pub const DEFAULT_GAP_TOL: f64 = 1e-9;
/// Δ′ samples per gap window.
pub const WINDOW_SAMPLES: usize = 64;

/// Numerical knobs shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralConfig {
    pub n_max: usize,
    pub ode: IntegratorConfig,
    pub quad_nodes: usize,
    pub gap_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            ode: IntegratorConfig::default(),
            quad_nodes: DEFAULT_QUAD_NODES,
            gap_tol: DEFAULT_GAP_TOL,
        }
    }
}

impl SpectralConfig {
    pub fn with_n_max(n_max: usize) -> Self {
        Self {
            n_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ode.validate()?;
        if self.n_max == 0 {
            return Err(ZsError::Config("n_max must be at least 1".into()));
        }
        if self.quad_nodes < 2 {
            return Err(ZsError::Config("quad_nodes must be at least 2".into()));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol.is_finite()) {
            return Err(ZsError::Config("gap_tol must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SpectralConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_max, 16);
        assert_eq!(c.quad_nodes, 128);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SpectralConfig {
            n_max: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SpectralConfig {
            quad_nodes: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SpectralConfig {
            gap_tol: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
