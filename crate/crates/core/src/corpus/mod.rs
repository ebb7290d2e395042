//! Evaluation outcomes, aggregate score matrices and the family/domain
//! configuration that the metrics run against.

mod config;
pub(crate) mod scores;
mod store;

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{load_config, DomainGroup, EvalConfig, FamilyHierarchy};
pub use scores::ScoreMatrix;
pub use store::{load_outcomes, read_outcomes, BenchmarkOutcomes, OutcomeRecord, OutcomeStore};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(
    /// Name of an evaluated model, e.g. `Qwen3-8B`.
    ModelId
);
id_type!(
    /// Name of a benchmark, e.g. `MATH-500`.
    BenchmarkId
);
id_type!(InstanceId);

/// A value together with non-fatal diagnostics produced while loading it.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}
