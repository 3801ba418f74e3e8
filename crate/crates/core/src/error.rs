use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZsError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid potential: {0}")]
    Potential(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("ODE integration failed at x = {x} after {steps} steps (error estimate {est_error:e})")]
    Integration { x: f64, steps: usize, est_error: f64 },

    #[error("no sign change of the Lyapunov derivative in the window of gap {n}")]
    NoCriticalPoint { n: i64 },

    #[error("root bracket [{a}, {b}] does not change sign")]
    NoBracket { a: f64, b: f64 },

    #[error("bisection did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("point z = {z} is outside the open interior of gap {n}")]
    OutsideGap { n: i64, z: f64 },

    #[error("gap {n} is closed")]
    ClosedGap { n: i64 },

    #[error("non-finite quadrature value on gap {n}")]
    Quadrature { n: i64 },

    #[error("degenerate critical point on gap {n}: |Δ''| = {dd_delta:e}")]
    DegenerateCritical { n: i64, dd_delta: f64 },

    #[error("singular F matrix")]
    SingularMatrix,
}

pub type Result<T> = std::result::Result<T, ZsError>;
