//! Allocation-only building blocks for evaluating models and datasets.
//!
//! Everything here is pure computation over in-memory rows: typed feature
//! schemas and column batches, the metric/comparison/measurement module
//! abstraction, the canonical scoring functions, the SacreBLEU `13a`
//! tokenizer, seeded bootstrap statistics and latency summaries. Storage,
//! module resolution and process orchestration live in the `evalkit` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod batch;
pub mod canonical;
pub mod error;
pub mod metrics;
pub mod module;
pub mod params;
pub mod perf;
pub mod result;
pub mod schema;
pub mod stats;
pub mod tokenize;

pub use batch::{Batch, Column};
pub use error::{CoreError, CoreResult};
pub use module::{combine_scores, ModuleInfo, ModuleKind, Scorer};
pub use params::{ParamValue, Params};
pub use result::{ModuleResult, OutputSpec, Provenance, ScoreKind, ScoreValue, Scores};
pub use schema::{ColumnType, FeatureSchema, Field};
