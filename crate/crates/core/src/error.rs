use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("feature hierarchy contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid tree structure: {0}")]
    Structure(String),
    /// No edge survived redundancy elimination; callers fall back to the class prior.
    #[error("no admissible edge: hierarchical-redundancy elimination left an empty tree")]
    EmptyTree,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("too few non-zero pairs for the signed-rank test: {0} (need at least 5)")]
    TooFewPairs(usize),
}
