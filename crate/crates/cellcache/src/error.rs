//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("station index {station} out of range (instance has {num_stations} stations)")]
    InvalidStation { station: usize, num_stations: usize },

    #[error("content index {content} out of range (instance has {num_contents} contents)")]
    InvalidContent { content: usize, num_contents: usize },

    #[error("event {index}: {source}")]
    Event {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("topology is disconnected: no path between stations {a} and {b}")]
    DisconnectedTopology { a: usize, b: usize },

    #[error("enumeration limit exceeded: {candidates} candidate cache classes > limit {limit}")]
    EnumerationLimitExceeded { candidates: usize, limit: usize },

    #[error("set cover: element {element} is not covered by any subset")]
    UncoveredElement { element: usize },

    #[error("set cover: the given subsets cannot cover the universe")]
    NoCover,

    #[error("tree with {stations} stations exceeds the station limit {limit}")]
    SizeLimit { stations: usize, limit: usize },

    #[error("request budget violated for n={n}: H^(H+1)/(H-1) = {lhs} with H={height}")]
    BudgetViolated { n: u64, height: usize, lhs: f64 },

    #[error("demand matrix carries no generation provenance")]
    MissingProvenance,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero baseline cost at position {index}")]
    ZeroBaseline { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance failed validation: {0}")]
    Validation(String),

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the stream event index it occurred at.
    pub fn at_event(self, index: usize) -> Self {
        Error::Event {
            index,
            source: Box::new(self),
        }
    }

    /// Wraps an error with the experiment run it occurred in.
    pub fn at_run(self, run: usize) -> Self {
        Error::Run {
            run,
            source: Box::new(self),
        }
    }
}
