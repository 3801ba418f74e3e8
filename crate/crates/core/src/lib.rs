//! Periodic spectrum of the Zakharov–Shabat operator `J f' + Q f = z f` with
//! `Q = [[q1, q2], [q2, −q1]]` for small real trigonometric potentials, and
//! the functionals built from its quasimomentum: actions, heights, `Q_j`,
//! `V = U`, the F matrix and the frequencies `Ω_n`.

pub mod cli;
pub mod config;
pub mod error;
pub mod gradients;
pub mod monodromy;
pub mod ode;
pub mod potential;
pub mod quadrature;
pub mod quasimomentum;
pub mod roots;
pub mod spectrum;
pub mod verify;

pub use config::SpectralConfig;
pub use error::{Result, ZsError};
pub use monodromy::{lyapunov, LyapunovValue};
pub use ode::IntegratorConfig;
pub use potential::{FourierPotential, Preset};
