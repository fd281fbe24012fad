use thiserror::Error;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Two distributions were combined but their axes disagree.
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numeric input is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A probability vector failed normalization or positivity checks.
    #[error("not a probability distribution: {0}")]
    NotNormalized(String),

    /// An exponential construction would exceed the enumeration budget.
    #[error("enumeration budget exceeded: need {needed} cells, limit {limit}")]
    Capacity { needed: u128, limit: u64 },

    /// The likelihood encoder found zero posterior mass for every message.
    /// Strict paths surface this error; total paths use an explicit,
    /// reported uniform-message fallback — never silent renormalization.
    #[error("atypical source sequence: zero posterior mass for every message")]
    AtypicalSource,

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
