//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model data: bad probabilities, mismatched table lengths,
    /// indices out of range.
    #[error("invalid model: {0}")]
    Model(String),

    /// An enumeration would exceed the configured joint-atom budget.
    /// Explicit by design; nothing is silently truncated.
    #[error("enumeration budget exceeded: {required} joint atoms requested, budget is {budget}")]
    Budget { required: u128, budget: u64 },

    /// A caller violated an operation's precondition (e.g. fed a
    /// non-normalized statistic to a bound that requires unit variance).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Requested a computation above a hard capability cap (e.g. shadow
    /// enumeration for an order beyond the supported range).
    #[error("capability limit: {0}")]
    Capability(String),

    /// Normalization of a (numerically) zero-variance statistic.
    #[error("cannot normalize: variance {0} is below threshold")]
    ZeroVariance(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
