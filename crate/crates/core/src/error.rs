//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its domain (non-positive omega0, zero waiting
    /// multiple, empty input, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A Bayes update whose normalization constant is not positive: the
    /// recorded outcome has zero posterior mass under the current series.
    #[error("degenerate update: outcome {outcome:+} at m={m} has non-positive mass {mass:e}")]
    DegenerateUpdate { m: u32, outcome: i8, mass: f64 },

    /// A LONA schedule was asked for more steps than it holds.
    #[error("LONA sequence exhausted: step {step} requested but sequence has {len} entries")]
    LonaSequenceExhausted { step: usize, len: usize },

    /// The LONA generator's branch ensemble outgrew the configured hard cap.
    #[error("branch cap exceeded at depth {step}: {branches} branches (cap {cap})")]
    BranchCapExceeded {
        step: usize,
        branches: usize,
        cap: usize,
    },

    /// A measurement record does not have the shape an operation requires.
    #[error("record shape error: {0}")]
    RecordShape(String),

    /// A curve or ensemble was empty or otherwise unusable.
    #[error("analysis input error: {0}")]
    AnalysisInput(String),

    /// Fit input contained a non-positive MSE, which cannot be log-transformed.
    #[error("non-positive mse at N={n}: {mse:e}")]
    NonPositiveMse { n: usize, mse: f64 },

    /// A results CSV could not be parsed against the curve schema.
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    /// A trial failed; carries the originating step for diagnosis.
    #[error("trial {trial} failed at step {step}: {source}")]
    TrialFailed {
        trial: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
