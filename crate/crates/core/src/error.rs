use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure categories surfaced by the library and mapped to CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: invalid `correct` value {value} (expected 0 or 1)")]
    InvalidCorrect { line: usize, value: String },

    #[error("line {line}: duplicate record for model `{model}`, benchmark `{benchmark}`, instance `{instance}`")]
    DuplicateRecord {
        line: usize,
        model: String,
        benchmark: String,
        instance: String,
    },

    #[error("instance `{instance}` of `{benchmark}` has conflicting token lengths {first} and {second}")]
    TokenConflict {
        benchmark: String,
        instance: String,
        first: u32,
        second: u32,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("score for `{model}` on `{benchmark}` is out of range: {value}")]
    ScoreOutOfRange {
        benchmark: String,
        model: String,
        value: f64,
    },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("unknown instance `{instance}` in benchmark `{benchmark}`")]
    UnknownInstance { benchmark: String, instance: String },

    #[error("no score for model `{model}` on benchmark `{benchmark}`")]
    MissingEntry { benchmark: String, model: String },

    #[error("rankings cover different model sets")]
    MismatchedModels,

    #[error("need at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },

    #[error("ranking is fully tied; correlation is undefined")]
    DegenerateRanking,

    #[error("mean score on `{0}` is zero")]
    ZeroMean(String),

    #[error("benchmark `{0}` has no peers in its domain")]
    NoPeers(String),

    #[error("no usable within-family comparisons on `{0}`")]
    NoComparisons(String),

    #[error("instance `{0}` has no valid family pairs")]
    Unscoreable(String),

    #[error("benchmark `{0}` lacks token lengths required by the length strategies")]
    MissingTokens(String),

    #[error("selection on `{0}` retained no instances")]
    EmptySelection(String),

    #[error("held-out model `{0}` was used in metric or selection computation")]
    HeldoutLeak(String),

    #[error("metric evaluator failed on {failed} of {total} resamples")]
    ResampleFailure { failed: usize, total: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the CLI: 2 for data-validation failures, 3 for metrics
    /// that cannot be computed on the given input, 1 for bad parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidCorrect { .. }
            | Error::DuplicateRecord { .. }
            | Error::TokenConflict { .. }
            | Error::Config(_)
            | Error::ScoreOutOfRange { .. }
            | Error::UnknownBenchmark(_)
            | Error::UnknownInstance { .. }
            | Error::MissingEntry { .. }
            | Error::MissingTokens(_)
            | Error::HeldoutLeak(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::MismatchedModels
            | Error::TooFewModels { .. }
            | Error::DegenerateRanking
            | Error::ZeroMean(_)
            | Error::NoPeers(_)
            | Error::NoComparisons(_)
            | Error::Unscoreable(_)
            | Error::EmptySelection(_)
            | Error::ResampleFailure { .. } => 3,
        }
    }
}
