use thiserror::Error;

/// Errors raised by state manipulation, protocol construction and the runners.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension budget exceeded: {required} entries requested, budget is {budget}")]
    DimensionBudget { required: u128, budget: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("operator is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("mode {mode} would exceed the Fock cutoff {cutoff}")]
    CutoffOverflow { mode: usize, cutoff: usize },

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeep,

    #[error("strong coupling: g = {g} exceeds kappa = {kappa}, the effective emission rate is not real")]
    StrongCoupling { g: f64, kappa: f64 },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("emission mode {mode} already holds a photon in a |down> branch")]
    OccupiedMode { mode: usize },

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("conditioning event has zero probability: {0}")]
    ZeroProbability(String),

    #[error("invalid density operator: {0}")]
    InvalidDensity(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn parameter(name: impl Into<String>, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            value,
            reason,
        }
    }

    /// True for resource exhaustion (dimension budget) as opposed to bad input.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::DimensionBudget { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
