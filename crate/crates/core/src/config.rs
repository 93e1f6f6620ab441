//! Declarative experiment configuration. Every machine parameter defaults to
//! the reference system, so a minimal config names only a workload and a mode.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerMode;
use crate::memory::{CacheLevelConfig, CostModel, FaultKind, NvmConfig};
use crate::redundancy::{PageGeometry, LINE_SIZE};
use crate::workload::WorkloadSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WayPartitionPlan {
    pub redundancy_ways: u32,
    pub diff_ways: u32,
}

impl Default for WayPartitionPlan {
    fn default() -> Self {
        WayPartitionPlan { redundancy_ways: 2, diff_ways: 1 }
    }
}

impl WayPartitionPlan {
    pub fn data_ways(&self, associativity: u32) -> Option<u32> {
        associativity.checked_sub(self.redundancy_ways + self.diff_ways)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub core_ghz: f64,
    pub l1: CacheLevelConfig,
    pub l2: CacheLevelConfig,
    pub llc: CacheLevelConfig,
    pub controller_cache: CacheLevelConfig,
    pub partitions: WayPartitionPlan,
    pub nvm: NvmConfig,
    pub page_size: u64,
    pub range_match_cycles: u64,
    /// Per checksum or parity computation.
    pub checksum_cycles: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            core_ghz: 2.27,
            l1: CacheLevelConfig::l1d(),
            l2: CacheLevelConfig::l2(),
            llc: CacheLevelConfig::llc(),
            controller_cache: CacheLevelConfig::controller(),
            partitions: WayPartitionPlan::default(),
            nvm: NvmConfig::default(),
            page_size: 4096,
            range_match_cycles: 2,
            checksum_cycles: 1,
        }
    }
}

impl MachineConfig {
    /// Scaled-down hierarchy for tests and quick runs. Ratios between levels
    /// are kept; absolute sizes shrink so small footprints still overflow the LLC.
    pub fn desk() -> Self {
        let mut m = MachineConfig::default();
        m.l1.capacity = 8 << 10;
        m.l2.capacity = 32 << 10;
        m.llc.capacity = 1 << 20;
        m.nvm.dimm_capacity = 64 << 20;
        m
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            core_ghz: self.core_ghz,
            l1: self.l1,
            l2: self.l2,
            llc: self.llc,
            controller: self.controller_cache,
            nvm: self.nvm,
        }
    }

    pub fn geometry(&self) -> Result<PageGeometry, &'static str> {
        PageGeometry::new(self.page_size, LINE_SIZE as u64).map_err(|_| "page size must be a multiple of 64")
    }

    pub fn validate(&self, errs: &mut Vec<FieldError>) {
        if !(self.core_ghz.is_finite() && self.core_ghz > 0.0) {
            errs.push(FieldError::new("machine.core_ghz", "must be a positive number"));
        }
        for (name, c) in [
            ("machine.l1", &self.l1),
            ("machine.l2", &self.l2),
            ("machine.llc", &self.llc),
            ("machine.controller_cache", &self.controller_cache),
        ] {
            if let Err(m) = c.validate() {
                errs.push(FieldError::new(name, m));
            }
        }
        if self.l2.capacity < self.l1.capacity {
            errs.push(FieldError::new("machine.l2.capacity", "must be at least the L1 capacity (L2 is inclusive)"));
        }
        if self.llc.capacity < self.l2.capacity {
            errs.push(FieldError::new("machine.llc.capacity", "must be at least the L2 capacity (LLC is inclusive)"));
        }
        match self.partitions.data_ways(self.llc.associativity) {
            None | Some(0) => errs.push(FieldError::new(
                "machine.partitions",
                "redundancy_ways + diff_ways must leave at least one LLC data way",
            )),
            Some(_) => {}
        }
        if let Err((f, m)) = self.nvm.validate() {
            errs.push(FieldError::new(format!("machine.nvm.{f}"), m));
        }
        if let Err(m) = self.geometry() {
            errs.push(FieldError::new("machine.page_size", m));
        }
    }
}

/// Per-mode knobs that do not change the machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerOptions {
    /// Bytes per checksummed object for the object-granular software scheme.
    pub object_size: u64,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        ControllerOptions { object_size: 64 }
    }
}

/// A fault in workload (logical) address terms; translated to a physical
/// line when the experiment starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub trigger: u64,
    #[serde(default = "one")]
    pub occurrence: u64,
    #[serde(default)]
    pub misdirect_target: Option<u64>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: ControllerMode,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub machine: MachineConfig,
    #[serde(default)]
    pub controller: ControllerOptions,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// One run per seed; each overrides `workload.seed`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "yes")]
    pub recovery_enabled: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(mode: ControllerMode, workload: WorkloadSpec) -> Self {
        ExperimentConfig {
            name: default_name(),
            mode,
            workload,
            machine: MachineConfig::default(),
            controller: ControllerOptions::default(),
            faults: Vec::new(),
            seeds: default_seeds(),
            recovery_enabled: true,
            output: OutputConfig::default(),
        }
    }

    /// Every problem found, each tagged with the offending field.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        if self.name.is_empty() {
            errs.push(FieldError::new("name", "must not be empty"));
        }
        self.machine.validate(&mut errs);
        self.workload.validate(&mut errs);
        if self.seeds.is_empty() {
            errs.push(FieldError::new("seeds", "at least one seed is required"));
        }
        let os = self.controller.object_size;
        let page = self.machine.page_size;
        if os == 0 || !os.is_multiple_of(LINE_SIZE as u64) || (!page.is_multiple_of(os) && !os.is_multiple_of(page)) {
            errs.push(FieldError::new(
                "controller.object_size",
                "must be a multiple of 64 that divides, or is a multiple of, the page size",
            ));
        }
        if self.workload.threads as u64 > 64 {
            errs.push(FieldError::new("workload.threads", "at most 64 lanes are supported"));
        }
        let footprint = self.workload.footprint();
        for (i, f) in self.faults.iter().enumerate() {
            let field = |s: &str| format!("faults[{i}].{s}");
            if f.trigger % LINE_SIZE as u64 != 0 {
                errs.push(FieldError::new(field("trigger"), "must be line aligned"));
            }
            if f.trigger >= footprint {
                errs.push(FieldError::new(field("trigger"), "outside the mapped workload footprint"));
            }
            if f.occurrence == 0 {
                errs.push(FieldError::new(field("occurrence"), "is 1-based"));
            }
            match (f.kind, f.misdirect_target) {
                (FaultKind::LostWrite, Some(_)) => {
                    errs.push(FieldError::new(field("misdirect_target"), "not allowed for lost writes"))
                }
                (FaultKind::LostWrite, None) => {}
                (_, None) => errs.push(FieldError::new(field("misdirect_target"), "required for misdirected faults")),
                (_, Some(t)) => {
                    if t % LINE_SIZE as u64 != 0 || t >= footprint {
                        errs.push(FieldError::new(
                            field("misdirect_target"),
                            "must be a line-aligned address inside the mapped footprint",
                        ));
                    }
                    if t == f.trigger {
                        errs.push(FieldError::new(field("misdirect_target"), "must differ from the trigger"));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadKind;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::new(ControllerMode::Evu, WorkloadSpec::new(WorkloadKind::SeqRead))
    }

    fn fields(c: &ExperimentConfig) -> Vec<String> {
        c.validate().unwrap_err().into_iter().map(|e| e.field).collect()
    }

    #[test]
    fn defaults_validate() {
        cfg().validate().unwrap();
        let mut c = cfg();
        c.machine = MachineConfig::desk();
        c.validate().unwrap();
    }

    #[test]
    fn reference_machine_values() {
        let m = MachineConfig::default();
        assert_eq!(m.llc.capacity, 24 << 20);
        assert_eq!(m.llc.associativity, 16);
        assert_eq!(m.partitions, WayPartitionPlan { redundancy_ways: 2, diff_ways: 1 });
        assert_eq!(m.nvm.num_dimms, 4);
        assert_eq!(m.nvm.read_latency_ns, 60);
        assert_eq!(m.nvm.write_latency_ns, 150);
        assert_eq!(m.controller_cache.capacity, 4096);
    }

    #[test]
    fn partitions_must_leave_data_ways() {
        let mut c = cfg();
        c.machine.partitions = WayPartitionPlan { redundancy_ways: 0, diff_ways: 16 };
        assert_eq!(fields(&c), ["machine.partitions"]);
        c.machine.partitions = WayPartitionPlan { redundancy_ways: 15, diff_ways: 1 };
        assert_eq!(fields(&c), ["machine.partitions"]);
    }

    #[test]
    fn field_level_messages() {
        let mut c = cfg();
        c.seeds.clear();
        c.machine.nvm.read_latency_ns = 0;
        c.controller.object_size = 100;
        assert_eq!(fields(&c), ["machine.nvm.read_latency_ns", "seeds", "controller.object_size"]);
    }

    #[test]
    fn faults_checked_against_footprint() {
        let mut c = cfg();
        let fp = c.workload.footprint();
        c.faults = vec![
            FaultSpec { kind: FaultKind::LostWrite, trigger: 64, occurrence: 1, misdirect_target: None },
            FaultSpec { kind: FaultKind::MisdirectedWrite, trigger: fp, occurrence: 0, misdirect_target: None },
            FaultSpec { kind: FaultKind::MisdirectedRead, trigger: 0, occurrence: 1, misdirect_target: Some(0) },
        ];
        assert_eq!(
            fields(&c),
            [
                "faults[1].trigger",
                "faults[1].occurrence",
                "faults[1].misdirect_target",
                "faults[2].misdirect_target"
            ]
        );
    }
}
