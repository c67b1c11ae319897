//! Evaluation modules with spillable accumulation, a module registry with
//! documentation cards, a model evaluation harness and an evaluation service.
//!
//! Pure scoring lives in [`evalkit_core`]; this crate adds files, processes,
//! storage and the command-line interface.

pub mod accumulator;
pub mod cli;
pub mod error;
pub mod evaluator;
pub mod jsonio;
pub mod module;
pub mod registry;
pub mod service;

pub use error::{Error, Result};
pub use evalkit_core as core;
pub use module::{CombinedModule, ComputeOptions, Evaluate, EvaluationModule, ModuleDef};
pub use registry::{Registry, RegistryRoot};
