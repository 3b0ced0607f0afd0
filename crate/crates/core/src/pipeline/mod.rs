//! Configuration, checkpoints, reports and the experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod report;

pub use checkpoint::{Checkpoint, CheckpointKind};
pub use config::{Experiment, ExperimentConfig};
pub use experiments::{HygieneAudit, Pipeline, Prepared, TrainedFins};
pub use report::ExperimentReport;
