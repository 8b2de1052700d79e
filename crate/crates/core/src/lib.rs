//! Batch-job scheduling toolkit: a discrete-event cluster simulator driven
//! by SWF traces, classic priority-function schedulers, and a policy-gradient
//! trainer that learns scheduling policies with a per-job kernel network.

pub mod cli;
pub mod config;
pub mod error;
pub mod heuristics;
pub mod neural;
pub mod sim;
pub mod trainer;
pub mod workload;

pub use error::{NeuralError, SimError, TrainError, WorkloadError};
