//! Access counters and their conversion to energy and model runtime.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cache::{CacheLevelConfig, HitMiss};
use super::nvm::{NvmConfig, NvmStats};

/// Accesses serviced on behalf of one logical thread. Runtime is the
/// serialized sum of the latency of whichever level serviced each access.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneCounters {
    pub l1_hits: u64,
    pub l2_hits: u64,
    pub llc_accesses: u64,
    pub controller_accesses: u64,
    pub compute_cycles: u64,
    pub nvm_reads: u64,
    pub nvm_writes: u64,
}

impl LaneCounters {
    fn add(&mut self, o: &LaneCounters) {
        self.l1_hits += o.l1_hits;
        self.l2_hits += o.l2_hits;
        self.llc_accesses += o.llc_accesses;
        self.controller_accesses += o.controller_accesses;
        self.compute_cycles += o.compute_cycles;
        self.nvm_reads += o.nvm_reads;
        self.nvm_writes += o.nvm_writes;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounters {
    pub l1: HitMiss,
    pub l2: HitMiss,
    pub llc_data: HitMiss,
    pub llc_redundancy: HitMiss,
    pub llc_diff: HitMiss,
    pub controller: HitMiss,
    /// Redundancy-line lookups and whether the controller cache or the LLC
    /// redundancy partition served them. Not a separate level; excluded from
    /// cache access totals.
    pub redundancy_lookups: HitMiss,
    pub nvm: NvmStats,
    /// One entry per workload thread.
    pub lanes: Vec<LaneCounters>,
    /// Work done after every thread finished (final flush), serialized after them.
    pub drain: LaneCounters,
}

impl AccessCounters {
    pub fn new(lanes: usize) -> Self {
        AccessCounters { lanes: vec![LaneCounters::default(); lanes], ..Default::default() }
    }

    pub fn llc(&self) -> HitMiss {
        let mut t = self.llc_data;
        t.add(&self.llc_redundancy);
        t.add(&self.llc_diff);
        t
    }

    pub fn cache_accesses(&self) -> u64 {
        self.l1.accesses() + self.l2.accesses() + self.llc().accesses() + self.controller.accesses()
    }

    /// Cache plus NVM accesses.
    pub fn total_traffic(&self) -> u64 {
        self.cache_accesses() + self.nvm.total()
    }

    /// Fraction of redundancy-line lookups served by the controller cache or
    /// the LLC redundancy partition.
    pub fn redundancy_cache_hit_rate(&self) -> Option<f64> {
        self.redundancy_lookups.hit_rate()
    }

    /// Element-wise sum; lane vectors are summed index by index.
    pub fn add(&mut self, o: &AccessCounters) {
        self.l1.add(&o.l1);
        self.l2.add(&o.l2);
        self.llc_data.add(&o.llc_data);
        self.llc_redundancy.add(&o.llc_redundancy);
        self.llc_diff.add(&o.llc_diff);
        self.controller.add(&o.controller);
        self.redundancy_lookups.add(&o.redundancy_lookups);
        self.nvm.data_reads += o.nvm.data_reads;
        self.nvm.data_writes += o.nvm.data_writes;
        self.nvm.redundancy_reads += o.nvm.redundancy_reads;
        self.nvm.redundancy_writes += o.nvm.redundancy_writes;
        if self.lanes.len() < o.lanes.len() {
            self.lanes.resize(o.lanes.len(), LaneCounters::default());
        }
        for (a, b) in self.lanes.iter_mut().zip(&o.lanes) {
            a.add(b);
        }
        self.drain.add(&o.drain);
    }
}

/// Per-event costs used by [`accrue`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub core_ghz: f64,
    pub l1: CacheLevelConfig,
    pub l2: CacheLevelConfig,
    pub llc: CacheLevelConfig,
    pub controller: CacheLevelConfig,
    pub nvm: NvmConfig,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            core_ghz: 2.27,
            l1: CacheLevelConfig::l1d(),
            l2: CacheLevelConfig::l2(),
            llc: CacheLevelConfig::llc(),
            controller: CacheLevelConfig::controller(),
            nvm: NvmConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accrued {
    pub energy_pj: u64,
    pub energy_joules: f64,
    pub runtime_ns: f64,
}

fn level_energy(hm: &HitMiss, c: &CacheLevelConfig) -> u64 {
    hm.hits * c.energy_hit_pj + hm.misses * c.energy_miss_pj
}

fn lane_ns(l: &LaneCounters, m: &CostModel) -> f64 {
    let cycles = l.l1_hits * m.l1.latency_cycles as u64
        + l.l2_hits * m.l2.latency_cycles as u64
        + l.llc_accesses * m.llc.latency_cycles as u64
        + l.controller_accesses * m.controller.latency_cycles as u64
        + l.compute_cycles;
    let nvm_ns = l.nvm_reads * m.nvm.read_latency_ns + l.nvm_writes * m.nvm.write_latency_ns;
    cycles as f64 / m.core_ghz + nvm_ns as f64
}

/// Energy is a plain linear sum of per-event costs; runtime is the slowest
/// thread plus the serialized drain.
pub fn accrue(c: &AccessCounters, m: &CostModel) -> Accrued {
    let energy_pj = level_energy(&c.l1, &m.l1)
        + level_energy(&c.l2, &m.l2)
        + level_energy(&c.llc(), &m.llc)
        + level_energy(&c.controller, &m.controller)
        + c.nvm.reads() * m.nvm.energy_read_pj
        + c.nvm.writes() * m.nvm.energy_write_pj;
    let slowest = c.lanes.iter().map(|l| lane_ns(l, m)).fold(0.0, f64::max);
    Accrued {
        energy_pj,
        energy_joules: energy_pj as f64 / 1e12,
        runtime_ns: slowest + lane_ns(&c.drain, m),
    }
}
