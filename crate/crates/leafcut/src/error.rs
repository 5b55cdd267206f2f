use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Error, Debug)]
pub enum Error {
    /// A parent array or tree structure failed validation.
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    /// A vertex with exactly one child was found where none are allowed.
    #[error("unary vertex at index {0}")]
    UnaryVertex(usize),
    /// A walk is not the Lukasiewicz path of a single tree.
    #[error("invalid walk: {0}")]
    InvalidWalk(String),
    /// An offspring distribution failed validation.
    #[error("invalid offspring distribution: {0}")]
    InvalidOffspring(String),
    /// An operation required a critical offspring distribution.
    #[error("offspring distribution is not critical (mean {0})")]
    NotCritical(f64),
    /// Requested leaf count has probability zero under the offspring law.
    #[error("no tree with {0} leaves is reachable under this offspring law")]
    InfeasibleLeafCount(usize),
    /// A configured size or attempt cap was exceeded.
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    /// A sampled tree grew past the configured vertex bound.
    #[error("tree exceeded {0} vertices during sampling")]
    SampleOverflow(usize),
    /// A correspondence does not cover both point sets or omits the roots.
    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(String),
    /// A measure is not a probability vector on the given points.
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    /// A numeric argument was out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Statistics were requested from an empty sample.
    #[error("empty sample")]
    EmptySample,
    /// Configuration could not be parsed or is inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
