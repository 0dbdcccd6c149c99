use thiserror::Error;

/// Errors produced by the operator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    /// `I - gamma P` could not be factorized. Cannot happen for a valid MDP
    /// with `gamma < 1`, so seeing this means an invariant was broken upstream.
    #[error("linear system (I - gamma P) is singular")]
    Singular,

    #[error("trajectory enumeration exceeds the limit of {limit} trajectories")]
    EnumerationLimit { limit: usize },

    #[error("trajectory {index} has negative return {value}")]
    NegativeReturn { index: usize, value: f64 },

    #[error("expected return is zero, reweighting by return is undefined")]
    ZeroReturn,

    #[error("return transform gave non-positive weight {value} on trajectory {index}")]
    NonPositiveTransform { index: usize, value: f64 },

    #[error("support violation: {0}")]
    Support(String),

    #[error("Q({state}, {action}) = {value} is negative")]
    NegativeQ {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("no state has value above the floor, nothing to improve")]
    NothingToImprove,

    #[error("invalid operator specification: {0}")]
    InvalidSpec(String),

    #[error("projection objective became non-finite")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A post-hoc validation pass over produced results failed.
    #[error("result check failed: {0}")]
    Check(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
