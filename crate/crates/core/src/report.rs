//! Run results and the metric vocabulary shared by comparisons, CSV output
//! and multi-seed summaries.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::controller::{AuditReport, ControllerMode, CorruptionEvent};
use crate::memory::{AccessCounters, FiredFault};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub mode: ControllerMode,
    pub seed: u64,
    /// The configuration this run used, narrowed to its seed.
    pub config: ExperimentConfig,
    /// Workload events and the final drain.
    pub counters: AccessCounters,
    /// Mapping-time work (line and object checksum initialization).
    pub setup_counters: AccessCounters,
    pub energy_pj: u64,
    pub energy_joules: f64,
    pub runtime_ns: f64,
    pub events_applied: u64,
    /// FNV-1a over the applied event stream, as hex.
    pub stream_digest: String,
    pub corruption_events: Vec<CorruptionEvent>,
    pub faults_fired: Vec<FiredFault>,
    pub silent_corruptions: u64,
    pub recoveries: u64,
    pub unrecoverable: u64,
    pub audit: AuditReport,
}

/// Named metrics in a fixed order. Missing ratios are left out.
pub fn metrics(r: &ExperimentReport) -> Vec<(&'static str, f64)> {
    let c = &r.counters;
    let mut m = Vec::with_capacity(24);
    let mut push = |k: &'static str, v: f64| m.push((k, v));
    push("runtime_ns", r.runtime_ns);
    push("energy_pj", r.energy_pj as f64);
    push("nvm_data_reads", c.nvm.data_reads as f64);
    push("nvm_data_writes", c.nvm.data_writes as f64);
    push("nvm_redundancy_reads", c.nvm.redundancy_reads as f64);
    push("nvm_redundancy_writes", c.nvm.redundancy_writes as f64);
    push("nvm_reads", c.nvm.reads() as f64);
    push("nvm_writes", c.nvm.writes() as f64);
    push("nvm_redundancy_traffic", c.nvm.redundancy_traffic() as f64);
    push("nvm_total", c.nvm.total() as f64);
    push("l1_accesses", c.l1.accesses() as f64);
    push("l2_accesses", c.l2.accesses() as f64);
    push("llc_accesses", c.llc().accesses() as f64);
    push("llc_data_accesses", c.llc_data.accesses() as f64);
    push("llc_redundancy_accesses", c.llc_redundancy.accesses() as f64);
    push("llc_diff_accesses", c.llc_diff.accesses() as f64);
    push("controller_accesses", c.controller.accesses() as f64);
    push("cache_accesses", c.cache_accesses() as f64);
    push("total_traffic", c.total_traffic() as f64);
    if let Some(h) = c.redundancy_cache_hit_rate() {
        push("redundancy_cache_hit_rate", h);
    }
    if let Some(a) = read_amplification(c) {
        push("read_amplification", a);
    }
    push("corruption_events", r.corruption_events.len() as f64);
    push("silent_corruptions", r.silent_corruptions as f64);
    m
}

/// NVM lines read per data line read.
pub fn read_amplification(c: &AccessCounters) -> Option<f64> {
    (c.nvm.data_reads > 0).then(|| c.nvm.reads() as f64 / c.nvm.data_reads as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub value: f64,
    pub baseline: f64,
    /// value / baseline; 1 when both are zero, absent when only the baseline is.
    pub ratio: Option<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mode: ControllerMode,
    pub baseline_mode: ControllerMode,
    pub metrics: Vec<MetricDelta>,
}

impl Comparison {
    pub fn ratio(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).and_then(|m| m.ratio)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompareError {
    WorkloadMismatch,
    SeedMismatch { report: u64, baseline: u64 },
}

impl fmt::Display for CompareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareError::WorkloadMismatch => f.write_str("reports ran different workloads"),
            CompareError::SeedMismatch { report, baseline } => {
                write!(f, "report seed {report} differs from baseline seed {baseline}")
            }
        }
    }
}

impl core::error::Error for CompareError {}

/// Per-metric ratios and deltas of `report` over `baseline`. Metrics present
/// in only one of the two are skipped.
pub fn compare(report: &ExperimentReport, baseline: &ExperimentReport) -> Result<Comparison, CompareError> {
    if report.seed != baseline.seed {
        return Err(CompareError::SeedMismatch { report: report.seed, baseline: baseline.seed });
    }
    if report.config.workload != baseline.config.workload {
        return Err(CompareError::WorkloadMismatch);
    }
    let base = metrics(baseline);
    let metrics = metrics(report)
        .into_iter()
        .filter_map(|(k, v)| {
            let (_, b) = base.iter().find(|(bk, _)| *bk == k)?;
            let ratio = match (v == 0.0, *b == 0.0) {
                (true, true) => Some(1.0),
                (_, true) => None,
                _ => Some(v / b),
            };
            Some(MetricDelta { metric: k.into(), value: v, baseline: *b, ratio, delta: v - b })
        })
        .collect();
    Ok(Comparison { mode: report.mode, baseline_mode: baseline.mode, metrics })
}
