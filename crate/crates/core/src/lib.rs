//! Quality metrics for LLM benchmarks: cross-benchmark ranking consistency,
//! discriminability, capability alignment, and selective benchmark
//! construction.

pub mod alignment;
pub mod corpus;
pub mod discrim;
pub mod error;
pub mod fixtures;
pub mod rankstats;
pub mod report;
pub mod resample;
pub mod selector;
pub mod synth;

pub use error::{Error, Result};
