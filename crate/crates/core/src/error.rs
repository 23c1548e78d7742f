//! Crate-wide error type.

use thiserror::Error;

use crate::metric::MetricViolation;
use crate::pts::PtsViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a rational: `{0}` (expected `p/q` or an integer)")]
    BadRational(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid transition system: {}", format_list(.0))]
    InvalidPts(Vec<PtsViolation>),

    #[error("invalid pseudometric: {}", format_list(.0))]
    InvalidMetric(Vec<MetricViolation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("bad marginals: {0}")]
    BadMarginals(String),

    #[error("partition is not a probabilistic bisimulation: states {} and {} in block {block} transition differently", pair.0 + 1, pair.1 + 1)]
    NotABisimulation { pair: (usize, usize), block: usize },

    #[error("partition is malformed: {0}")]
    BadPartition(String),

    #[error("state index {0} out of range 1..={1}")]
    StateIndex(usize, usize),

    #[error("known distance conflicts with constraint `{atom}`")]
    KnownConflict { atom: String },

    #[error("termination system unexpectedly singular")]
    SingularSystem,

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
