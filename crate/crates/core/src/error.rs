use thiserror::Error;

/// Errors raised by the capacity library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probe point lies within {distance:e} m of transmitter {index}")]
    CoincidentPoint { index: usize, distance: f64 },

    #[error("transmitter index {index} out of range for a set of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region holds {found} lattice points, at least {required} required")]
    RegionTooSmall { found: usize, required: usize },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("boundary quadratic has no positive root for beta = {beta}")]
    NoPositiveRoot { beta: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("contour did not close within {steps} steps")]
    NoClosure { steps: usize },

    #[error("SIR gradient vanished at step {step}")]
    GradientVanished { step: usize },

    #[error("series for P(W < {x}) diverges after {terms} terms")]
    SeriesDiverging { x: f64, terms: usize },

    #[error("{failures} of {samples} samples failed, above the {max_rate} abort rate")]
    FailureRate {
        failures: usize,
        samples: usize,
        max_rate: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
