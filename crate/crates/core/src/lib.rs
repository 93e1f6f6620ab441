#![cfg_attr(not(any(feature = "std", test)), no_std)]
//! Access-driven model of direct-access NVM storage with hardware and
//! software redundancy maintenance.
//!
//! A [`controller::Simulator`] owns a private L1/L2 per lane, a shared
//! way-partitioned LLC, a redundancy controller and an array of NVM DIMMs.
//! Workload streams from [`workload::generate`] drive it; the
//! [`experiment`] module wraps a whole run and produces an
//! [`report::ExperimentReport`].

extern crate alloc;

pub mod config;
pub mod controller;
pub mod experiment;
pub mod memory;
pub mod redundancy;
pub mod report;
pub mod workload;

pub use config::{ExperimentConfig, MachineConfig, WayPartitionPlan};
pub use controller::{ControllerMode, Simulator};
pub use experiment::{run, run_seed, Experiment, RunError};
pub use report::{compare, ExperimentReport};
pub use workload::{generate, WorkloadKind, WorkloadSpec};
