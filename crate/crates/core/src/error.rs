use thiserror::Error;

/// Errors produced by the analytics, the optimizer and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model cannot be evaluated for this combination of inputs,
    /// e.g. an infinite code length carrying positive probability.
    #[error("model error: {0}")]
    Model(String),

    /// The optimizer only supports symmetric thresholds.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// No point satisfies the constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A root bracket or search could not be established.
    #[error("search failure: {0}")]
    SearchFailure(String),

    /// The simulation horizon did not allow any complete cycle.
    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    /// Not enough observations for a statistical test.
    #[error("insufficient sample size: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
