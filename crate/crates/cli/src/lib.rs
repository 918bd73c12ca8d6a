//! Experiment runners and output plumbing behind the `glu-ntk` binary.

pub mod report;
pub mod runners;

pub use report::{Format, RunContext, RunManifest};
pub use runners::UsageError;
