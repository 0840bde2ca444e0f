//! Command-line surface: configuration, checkpoints, the synthetic corpus
//! generator and the pipeline stages.

pub mod checkpoint;
pub mod config;
pub mod pipeline;
pub mod synthetic;
