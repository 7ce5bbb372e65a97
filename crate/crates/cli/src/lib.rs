//! Operator frontend for the hyper-relationship scene-graph engine.
//!
//! The library half carries everything the `hln` binary does — flat run
//! configuration, dataset files, binary checkpoints, metric reports and the
//! four commands (generate, train, eval, infer) — so integration tests can
//! drive the exact production code paths in-process.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod metrics_io;

pub use commands::{cmd_eval, cmd_generate, cmd_infer, cmd_train};
pub use config::RunConfig;
