//! Task routing toolkit: routing-token grammar, controllers, a specialist
//! registry, a chain executor, corpus synthesis, and routing metrics.

pub mod artifact;
pub mod controller;
pub mod dataset;
pub mod executor;
pub mod grammar;
pub mod registry;
pub mod task;
pub mod transport;
pub mod eval;
pub mod cli;
