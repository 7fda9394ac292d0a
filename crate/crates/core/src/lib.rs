//! Compiler flag autotuning.
//!
//! Searches the space of optimization-flag configurations for settings that
//! beat a compiler's stock optimization level, either per program (random
//! iterative compilation, combined elimination) or across a whole benchmark
//! suite (suite-wide combined elimination under a per-benchmark slowdown
//! threshold). Evaluation goes through a digest-keyed cache and either an
//! external compile-and-run pipeline or a deterministic synthetic model.

pub mod analysis;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod flagspace;
pub mod oracle;
pub mod search;

pub use error::{Error, Result};
pub use evaluator::{Evaluator, Measurement, Status};
pub use flagspace::{Configuration, FlagDescriptor, FlagSpace};
