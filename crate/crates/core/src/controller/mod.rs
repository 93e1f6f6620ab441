//! Redundancy controllers: where checksums and parity are maintained, how
//! reads are verified, and how corrupted pages are rebuilt.

mod audit;
mod mapping;
mod sim;
mod txb;

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::memory::NvmError;
use crate::redundancy::{Checksum32, LayoutError};

pub use audit::{AuditFinding, AuditReport};
pub use mapping::{DaxMappingTable, Mapping};
pub use sim::{SimOptions, Simulator};

/// Which redundancy scheme runs. Fixed for the lifetime of a simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// No redundancy maintained or checked.
    Off,
    /// Page checksums and parity, updated and verified from NVM on every access.
    Naive,
    /// Naive plus per-line checksums for mapped ranges.
    Ev,
    /// Ev plus caching of redundancy lines; diffs still come from NVM.
    EvCache,
    /// Ev plus redundancy caching plus LLC-resident data diffs.
    Evu,
    /// Software: object checksums and parity updated at transaction boundaries.
    TxbObject,
    /// Software: page checksums and parity updated at transaction boundaries.
    TxbPage,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 7] = [
        ControllerMode::Off,
        ControllerMode::Naive,
        ControllerMode::Ev,
        ControllerMode::EvCache,
        ControllerMode::Evu,
        ControllerMode::TxbObject,
        ControllerMode::TxbPage,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            ControllerMode::Off => "off",
            ControllerMode::Naive => "naive",
            ControllerMode::Ev => "ev",
            ControllerMode::EvCache => "ev_cache",
            ControllerMode::Evu => "evu",
            ControllerMode::TxbObject => "txb_object",
            ControllerMode::TxbPage => "txb_page",
        }
    }

    /// Hardware controller that verifies every fill of a mapped line.
    pub const fn verifies(self) -> bool {
        matches!(self, ControllerMode::Naive | ControllerMode::Ev | ControllerMode::EvCache | ControllerMode::Evu)
    }

    pub const fn line_checksums(self) -> bool {
        matches!(self, ControllerMode::Ev | ControllerMode::EvCache | ControllerMode::Evu)
    }

    pub const fn caches_redundancy(self) -> bool {
        matches!(self, ControllerMode::EvCache | ControllerMode::Evu)
    }

    pub const fn keeps_diffs(self) -> bool {
        matches!(self, ControllerMode::Evu)
    }

    pub const fn software(self) -> bool {
        matches!(self, ControllerMode::TxbObject | ControllerMode::TxbPage)
    }

    /// LLC ways for (data, redundancy, diff) under this mode.
    pub fn llc_ways(self, associativity: u32, redundancy_ways: u32, diff_ways: u32) -> [u32; 3] {
        match self {
            ControllerMode::Evu => [associativity - redundancy_ways - diff_ways, redundancy_ways, diff_ways],
            ControllerMode::EvCache => [associativity - redundancy_ways, redundancy_ways, 0],
            _ => [associativity, 0, 0],
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for ControllerMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or(SimError::Config("unknown controller mode"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionPoint {
    /// Verification of a line being filled into the LLC.
    Fill,
    /// Verification of the old media content ahead of a write-back.
    Writeback,
}

/// A checksum mismatch raised by the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionEvent {
    /// Workload event ordinal (1-based) during which the mismatch was seen; 0 during setup.
    pub detected_at: u64,
    pub line_addr: u64,
    pub page_addr: u64,
    pub expected: Checksum32,
    pub computed: Checksum32,
    pub point: DetectionPoint,
    /// Set only after the rebuilt page verified and the retried read matched.
    pub recovered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimError {
    Layout(LayoutError),
    Nvm(NvmError),
    Overlap(u64),
    NotMapped(u64),
    Unaligned(u64),
    OutOfSpace(u64),
    BadLane(usize),
    Config(&'static str),
    /// Internal bookkeeping broke; a simulator bug, not a modelled fault.
    Invariant(&'static str),
}

impl From<LayoutError> for SimError {
    fn from(e: LayoutError) -> Self {
        SimError::Layout(e)
    }
}

impl From<NvmError> for SimError {
    fn from(e: NvmError) -> Self {
        SimError::Nvm(e)
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Layout(e) => write!(f, "{e}"),
            SimError::Nvm(e) => write!(f, "{e}"),
            SimError::Overlap(a) => write!(f, "range at {a:#x} overlaps an existing mapping"),
            SimError::NotMapped(a) => write!(f, "no mapping starts at {a:#x}"),
            SimError::Unaligned(a) => write!(f, "{a:#x} is not aligned as required"),
            SimError::OutOfSpace(n) => write!(f, "no aux space left for a {n} B buffer"),
            SimError::BadLane(l) => write!(f, "lane {l} does not exist"),
            SimError::Config(m) => write!(f, "{m}"),
            SimError::Invariant(m) => write!(f, "simulator invariant violated: {m}"),
        }
    }
}

impl core::error::Error for SimError {}
