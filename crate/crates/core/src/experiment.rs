//! Single-seed experiment driver: build the machine, map the workload
//! footprint, arm faults, replay the stream, drain, audit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{ExperimentConfig, FieldError};
use crate::controller::{SimError, SimOptions, Simulator};
use crate::memory::{accrue, AccessCounters, FaultScheduleEntry};
use crate::redundancy::Region;
use crate::report::{ExperimentReport, SCHEMA_VERSION};
use crate::workload::{generate, AccessEvent, WorkloadStream, DIGEST_SEED};

#[derive(Debug)]
pub enum RunError {
    Config(Vec<FieldError>),
    Sim(SimError),
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        RunError::Sim(e)
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(errs) => {
                f.write_str("invalid configuration")?;
                for e in errs {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
            RunError::Sim(e) => write!(f, "simulation failed: {e}"),
        }
    }
}

impl core::error::Error for RunError {}

/// An experiment in progress, steppable one event at a time.
pub struct Experiment {
    config: ExperimentConfig,
    seed: u64,
    sim: Simulator,
    stream: WorkloadStream,
    digest: u64,
    applied: u64,
    setup: AccessCounters,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self, RunError> {
        config.validate().map_err(RunError::Config)?;
        let spec = config.workload.with_seed(seed);
        let opts = SimOptions { recovery_enabled: config.recovery_enabled, object_size: config.controller.object_size };
        let mut sim = Simulator::new(&config.machine, config.mode, spec.threads as usize, opts)?;
        let footprint = Region { base: 0, len: spec.footprint() };
        if footprint.len > sim.layout().data_bytes() {
            return Err(RunError::Config(vec![FieldError::new(
                "workload.region_bytes",
                format!(
                    "footprint of {} B exceeds the {} B of data space on the configured DIMMs",
                    footprint.len,
                    sim.layout().data_bytes()
                ),
            )]));
        }
        sim.map_file(footprint)?;
        let setup = sim.counters();
        sim.reset_counters();
        for f in &config.faults {
            let target = match f.misdirect_target {
                Some(t) => Some(sim.layout().translate(t).map_err(SimError::from)?),
                None => None,
            };
            let trigger = sim.layout().translate(f.trigger).map_err(SimError::from)?;
            sim.nvm_mut()
                .arm(FaultScheduleEntry { kind: f.kind, trigger, occurrence: f.occurrence, misdirect_target: target })
                .map_err(SimError::from)?;
        }
        let stream = generate(&spec).map_err(RunError::Config)?;
        let mut config = config.clone();
        config.workload.seed = seed;
        config.seeds = vec![seed];
        Ok(Experiment { config, seed, sim, stream, digest: DIGEST_SEED, applied: 0, setup })
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    /// Applies the next event; `None` once the stream is exhausted.
    pub fn step(&mut self) -> Result<Option<AccessEvent>, RunError> {
        let Some(ev) = self.stream.next() else { return Ok(None) };
        self.digest = ev.digest(self.digest);
        self.applied += 1;
        self.sim.apply(&ev)?;
        Ok(Some(ev))
    }

    pub fn finish(mut self) -> Result<ExperimentReport, RunError> {
        while self.step()?.is_some() {}
        self.sim.finish()?;
        let counters = self.sim.counters();
        let acc = accrue(&counters, &self.sim.cost_model());
        let (recoveries, unrecoverable) = self.sim.recoveries();
        Ok(ExperimentReport {
            schema_version: SCHEMA_VERSION,
            name: self.config.name.clone(),
            mode: self.config.mode,
            seed: self.seed,
            counters,
            setup_counters: self.setup,
            energy_pj: acc.energy_pj,
            energy_joules: acc.energy_joules,
            runtime_ns: acc.runtime_ns,
            events_applied: self.applied,
            stream_digest: format!("{:016x}", self.digest),
            corruption_events: self.sim.events().to_vec(),
            faults_fired: self.sim.nvm().fired().to_vec(),
            silent_corruptions: self.sim.silent_corruptions(),
            recoveries,
            unrecoverable,
            audit: self.sim.audit(),
            config: self.config,
        })
    }
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<ExperimentReport, RunError> {
    Experiment::new(config, seed)?.finish()
}

/// One report per configured seed, in order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>, RunError> {
    config.seeds.iter().map(|&s| run_seed(config, s)).collect()
}
