use thiserror::Error;

/// Errors raised by the analysis, construction and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("pole on the imaginary axis at omega = {omega} rad/s")]
    PoleOnAxis { omega: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient CRONE sections: got {got}, need at least {required}")]
    InsufficientSections { got: usize, required: usize },

    #[error("resonant frequency: {matrix} is singular at omega = {omega} rad/s")]
    ResonantFrequency { matrix: &'static str, omega: f64 },

    #[error("auxiliary output tapping the resetting state is not defined")]
    MissingAuxOutput,

    #[error("no sign change of the bracketed function on [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("no linear-behaviour frequency: {0}")]
    NoLinearBehavior(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("algebraic loop: 1 + D_plant * D_controller = {0}")]
    AlgebraicLoop(f64),

    #[error("state diverged at t = {t} s")]
    Divergence { t: f64 },

    #[error("response did not converge to steady state: {0}")]
    NotConverged(String),

    #[error("segment does not span an integer number of periods: {0}")]
    NonIntegerPeriods(String),

    #[error("no settling within the simulated duration")]
    NoSettling,

    #[error("no gain crossover in [{lo}, {hi}] rad/s")]
    NoCrossover { lo: f64, hi: f64 },

    #[error("target unreachable: {0}")]
    Unreachable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
