use thiserror::Error;

/// Errors raised by the estimation engine and its analysis tools.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value lies outside the task domain (bounds, feasibility, grid size).
    #[error("domain error: {0}")]
    Domain(String),
    /// Constraints or configuration that admit no valid result.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed input such as non-finite coordinates or mismatched lengths.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Input whose variance (or support) makes a statistic undefined.
    #[error("degenerate data: {0}")]
    Degenerate(String),
    /// A fit produced a non-finite estimate.
    #[error("non-finite result: {0}")]
    NonFinite(String),
    /// An operation was applied to a state that no longer accepts it.
    #[error("invalid state: {0}")]
    State(String),
    /// No session or record under the given identifier.
    #[error("not found: {0}")]
    NotFound(String),
    /// The request is valid but not offered for this kind of session.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Reading or writing the session store failed.
    #[error("storage error: {0}")]
    Storage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
