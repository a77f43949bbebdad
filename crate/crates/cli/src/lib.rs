//! Experiment pipeline: build the taxi model, synthesize an expert, clone
//! it into many networks, verify and rank them, and evaluate the resulting
//! Rashomon set under a shifted job count.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{
    cmd_all, cmd_attribute, cmd_build, cmd_rashomon, cmd_shift, cmd_synthesize, cmd_train, cmd_verify, RunManifest,
    StageReport,
};
