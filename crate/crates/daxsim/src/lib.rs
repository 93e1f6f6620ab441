//! File formats, sweeps and the runner behind the `daxsim` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod summary;
pub mod sweep;

pub use error::{Error, Result};
pub use output::RunOutput;

use daxsim_core::ExperimentReport;

/// Silent corruptions in runs whose mode promises detection. Nonzero means
/// the simulator broke its own guarantee.
pub fn missed_detections(reports: &[ExperimentReport]) -> u64 {
    reports.iter().filter(|r| r.mode.verifies()).map(|r| r.silent_corruptions).sum()
}
