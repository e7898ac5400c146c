//! Deterministic simulator and library for collaborative policy learning over
//! dynamic scheduling tasks in hierarchical IoT networks.
//!
//! Edges run deep Q-learning over an edge-agnostic policy encoding; a cloud
//! server federates the per-task policies of the edges that are available each
//! round, choosing which tasks to federate under bandwidth/memory/compute
//! capacities with a proportional-fair dual controller. Everything is seeded:
//! a config plus a master seed reproduces every CSV byte, single-threaded or
//! parallel.

// Validation uses `!(x > y)` on floats deliberately: the negation rejects NaN
// where `x <= y` would accept it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agnostic;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod orchestrator;
pub mod rng;
pub mod selection;
pub mod tasks;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use metrics::MetricsLog;
pub use orchestrator::{run_simulation, run_simulation_with_options, RunOptions};
pub use selection::SelectionPolicy;
pub use tasks::TaskKind;
