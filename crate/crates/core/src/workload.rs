//! Seeded synthetic access streams.
//!
//! Each lane owns a disjoint region of the logical data space starting at
//! `lane * region_bytes` and its own ChaCha8 generator, so a lane's stream
//! does not depend on how many other lanes exist. Lanes are interleaved one
//! event at a time in round-robin order.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::FieldError;
use crate::redundancy::{Line, LINE_SIZE, ZERO_LINE};

const LINE: u64 = LINE_SIZE as u64;
/// Lines per log node.
pub const LOG_NODE_LINES: u64 = 4;
/// Share of keys forming the hot set, and share of operations sent to it.
pub const HOT_KEYS: f64 = 0.10;
pub const HOT_OPS: f64 = 0.90;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    SeqRead,
    SeqWrite,
    RandRead,
    RandWrite,
    /// c = a
    StreamCopy,
    /// b = s * c
    StreamScale,
    /// c = a + b
    StreamAdd,
    /// a = b + s * c
    StreamTriad,
    /// Point reads and updates over a key space with a 90/10 hot set.
    KvSkewed,
    /// Fresh log nodes at shuffled locations, each linked from its predecessor.
    LogAppend,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 10] = [
        WorkloadKind::SeqRead,
        WorkloadKind::SeqWrite,
        WorkloadKind::RandRead,
        WorkloadKind::RandWrite,
        WorkloadKind::StreamCopy,
        WorkloadKind::StreamScale,
        WorkloadKind::StreamAdd,
        WorkloadKind::StreamTriad,
        WorkloadKind::KvSkewed,
        WorkloadKind::LogAppend,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            WorkloadKind::SeqRead => "seq_read",
            WorkloadKind::SeqWrite => "seq_write",
            WorkloadKind::RandRead => "rand_read",
            WorkloadKind::RandWrite => "rand_write",
            WorkloadKind::StreamCopy => "stream_copy",
            WorkloadKind::StreamScale => "stream_scale",
            WorkloadKind::StreamAdd => "stream_add",
            WorkloadKind::StreamTriad => "stream_triad",
            WorkloadKind::KvSkewed => "kv_skewed",
            WorkloadKind::LogAppend => "log_append",
        }
    }

    /// Kinds that store at least as often as they load.
    pub const fn write_heavy(self) -> bool {
        matches!(self, WorkloadKind::SeqWrite | WorkloadKind::RandWrite | WorkloadKind::LogAppend)
    }

    pub const fn stores(self) -> bool {
        !matches!(self, WorkloadKind::SeqRead | WorkloadKind::RandRead)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    #[serde(default = "default_threads")]
    pub threads: u32,
    #[serde(default = "default_region")]
    pub region_bytes: u64,
    #[serde(default)]
    pub seed: u64,
    /// Events per transaction; every lane's last event also ends one.
    #[serde(default = "default_txn")]
    pub txn_size: u64,
    /// kv_skewed: probability that an operation is an update.
    #[serde(default = "default_update_fraction")]
    pub update_fraction: f64,
    /// Kernel steps per lane (lines, elements, operations or nodes). Defaults
    /// to one pass over the region.
    #[serde(default)]
    pub ops_per_thread: Option<u64>,
}

fn default_threads() -> u32 {
    12
}

fn default_region() -> u64 {
    16 << 20
}

fn default_txn() -> u64 {
    1
}

fn default_update_fraction() -> f64 {
    0.5
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind) -> Self {
        WorkloadSpec {
            kind,
            threads: default_threads(),
            region_bytes: default_region(),
            seed: 0,
            txn_size: default_txn(),
            update_fraction: default_update_fraction(),
            ops_per_thread: None,
        }
    }

    /// Logical bytes touched by all lanes together, starting at address 0.
    pub fn footprint(&self) -> u64 {
        self.threads as u64 * self.region_bytes
    }

    pub fn region_lines(&self) -> u64 {
        self.region_bytes / LINE
    }

    /// Steps one pass over the region takes.
    fn full_steps(&self) -> u64 {
        let lines = self.region_lines();
        match self.kind {
            WorkloadKind::StreamCopy
            | WorkloadKind::StreamScale
            | WorkloadKind::StreamAdd
            | WorkloadKind::StreamTriad => lines / 3,
            WorkloadKind::LogAppend => lines / LOG_NODE_LINES,
            _ => lines,
        }
    }

    pub fn steps_per_thread(&self) -> u64 {
        self.ops_per_thread.unwrap_or_else(|| self.full_steps())
    }

    /// Events one lane emits.
    pub fn events_per_thread(&self) -> u64 {
        let s = self.steps_per_thread();
        match self.kind {
            WorkloadKind::StreamCopy | WorkloadKind::StreamScale => 2 * s,
            WorkloadKind::StreamAdd | WorkloadKind::StreamTriad => 3 * s,
            WorkloadKind::LogAppend => (LOG_NODE_LINES + 1) * s - s.min(1),
            _ => s,
        }
    }

    pub fn validate(&self, errs: &mut Vec<FieldError>) {
        if self.threads == 0 {
            errs.push(FieldError::new("workload.threads", "must be at least 1"));
        }
        if self.region_bytes == 0 || !self.region_bytes.is_multiple_of(4096) {
            errs.push(FieldError::new("workload.region_bytes", "must be a positive multiple of 4096"));
        }
        if self.txn_size == 0 {
            errs.push(FieldError::new("workload.txn_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.update_fraction) {
            errs.push(FieldError::new("workload.update_fraction", "must lie in [0, 1]"));
        }
        let bounded = !matches!(self.kind, WorkloadKind::KvSkewed);
        if let Some(n) = self.ops_per_thread {
            if n == 0 {
                errs.push(FieldError::new("workload.ops_per_thread", "must be at least 1"));
            } else if bounded && n > self.full_steps() {
                errs.push(FieldError::new(
                    "workload.ops_per_thread",
                    "region too small: more steps requested than the region holds",
                ));
            }
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Load,
    Store,
}

/// One line-sized access in logical data-space terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessEvent {
    pub lane: u32,
    pub op: Op,
    pub addr: u64,
    /// Stored value; zero for loads.
    pub payload: Line,
    pub txn_boundary: bool,
}

impl AccessEvent {
    /// Folds the event into a running 64-bit FNV-1a digest.
    pub fn digest(&self, mut h: u64) -> u64 {
        const P: u64 = 0x0000_0100_0000_01B3;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(P);
        };
        self.lane.to_le_bytes().into_iter().for_each(&mut eat);
        eat(matches!(self.op, Op::Store) as u8);
        self.addr.to_le_bytes().into_iter().for_each(&mut eat);
        self.payload.into_iter().for_each(&mut eat);
        eat(self.txn_boundary as u8);
        h
    }
}

pub const DIGEST_SEED: u64 = 0xCBF2_9CE4_8422_2325;

fn lane_rng(seed: u64, lane: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&lane.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

struct LaneGen {
    lane: u32,
    base: u64,
    rng: ChaCha8Rng,
    step: u64,
    steps: u64,
    emitted: u64,
    total: u64,
    /// Line-index permutation for random and log kinds.
    order: Vec<u32>,
    queue: VecDeque<(Op, u64)>,
}

impl LaneGen {
    fn new(spec: &WorkloadSpec, lane: u32) -> Self {
        let mut rng = lane_rng(spec.seed, lane);
        let order = match spec.kind {
            WorkloadKind::RandRead | WorkloadKind::RandWrite => {
                let mut v: Vec<u32> = (0..spec.region_lines() as u32).collect();
                v.shuffle(&mut rng);
                v
            }
            WorkloadKind::LogAppend => {
                let mut v: Vec<u32> = (0..(spec.region_lines() / LOG_NODE_LINES) as u32).collect();
                v.shuffle(&mut rng);
                v
            }
            _ => Vec::new(),
        };
        LaneGen {
            lane,
            base: lane as u64 * spec.region_bytes,
            rng,
            step: 0,
            steps: spec.steps_per_thread(),
            emitted: 0,
            total: spec.events_per_thread(),
            order,
            queue: VecDeque::new(),
        }
    }

    fn line(&self, i: u64) -> u64 {
        self.base + i * LINE
    }

    fn refill(&mut self, spec: &WorkloadSpec) {
        let k = self.step;
        self.step += 1;
        let n = spec.region_lines() / 3;
        let (a, b, c) = (k, n + k, 2 * n + k);
        let q = &mut self.queue;
        match spec.kind {
            WorkloadKind::SeqRead => q.push_back((Op::Load, self.base + k * LINE)),
            WorkloadKind::SeqWrite => q.push_back((Op::Store, self.base + k * LINE)),
            WorkloadKind::RandRead => q.push_back((Op::Load, self.base + self.order[k as usize] as u64 * LINE)),
            WorkloadKind::RandWrite => q.push_back((Op::Store, self.base + self.order[k as usize] as u64 * LINE)),
            WorkloadKind::StreamCopy => {
                q.push_back((Op::Load, self.base + a * LINE));
                q.push_back((Op::Store, self.base + c * LINE));
            }
            WorkloadKind::StreamScale => {
                q.push_back((Op::Load, self.base + c * LINE));
                q.push_back((Op::Store, self.base + b * LINE));
            }
            WorkloadKind::StreamAdd => {
                q.push_back((Op::Load, self.base + a * LINE));
                q.push_back((Op::Load, self.base + b * LINE));
                q.push_back((Op::Store, self.base + c * LINE));
            }
            WorkloadKind::StreamTriad => {
                q.push_back((Op::Load, self.base + b * LINE));
                q.push_back((Op::Load, self.base + c * LINE));
                q.push_back((Op::Store, self.base + a * LINE));
            }
            WorkloadKind::KvSkewed => {
                let keys = spec.region_lines();
                let hot = ((keys as f64 * HOT_KEYS) as u64).max(1);
                let key = if self.rng.random::<f64>() < HOT_OPS || hot == keys {
                    self.rng.random_range(0..hot)
                } else {
                    self.rng.random_range(hot..keys)
                };
                let op = if self.rng.random::<f64>() < spec.update_fraction { Op::Store } else { Op::Load };
                let addr = self.line(key);
                self.queue.push_back((op, addr));
            }
            WorkloadKind::LogAppend => {
                let node = self.order[k as usize] as u64 * LOG_NODE_LINES;
                for i in 0..LOG_NODE_LINES {
                    self.queue.push_back((Op::Store, self.base + (node + i) * LINE));
                }
                if k > 0 {
                    let prev = self.order[k as usize - 1] as u64 * LOG_NODE_LINES;
                    self.queue.push_back((Op::Store, self.base + prev * LINE));
                }
            }
        }
    }

    fn next_event(&mut self, spec: &WorkloadSpec) -> Option<AccessEvent> {
        if self.queue.is_empty() {
            if self.step >= self.steps {
                return None;
            }
            self.refill(spec);
        }
        let (op, addr) = self.queue.pop_front()?;
        let mut payload = ZERO_LINE;
        if op == Op::Store {
            self.rng.fill_bytes(&mut payload);
        }
        self.emitted += 1;
        let txn_boundary = self.emitted.is_multiple_of(spec.txn_size) || self.emitted == self.total;
        Some(AccessEvent { lane: self.lane, op, addr, payload, txn_boundary })
    }
}

/// Deterministic event iterator over all lanes.
pub struct WorkloadStream {
    spec: WorkloadSpec,
    lanes: Vec<LaneGen>,
    cursor: usize,
    remaining: u64,
}

impl WorkloadStream {
    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }
}

impl Iterator for WorkloadStream {
    type Item = AccessEvent;

    fn next(&mut self) -> Option<AccessEvent> {
        let n = self.lanes.len();
        for _ in 0..n {
            let i = self.cursor;
            self.cursor = (self.cursor + 1) % n;
            if let Some(ev) = self.lanes[i].next_event(&self.spec) {
                self.remaining -= 1;
                return Some(ev);
            }
        }
        None
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

impl ExactSizeIterator for WorkloadStream {}

pub fn generate(spec: &WorkloadSpec) -> Result<WorkloadStream, Vec<FieldError>> {
    let mut errs = Vec::new();
    spec.validate(&mut errs);
    if !errs.is_empty() {
        return Err(errs);
    }
    let lanes: Vec<LaneGen> = (0..spec.threads).map(|l| LaneGen::new(spec, l)).collect();
    let remaining = lanes.iter().map(|l| l.total).sum();
    Ok(WorkloadStream { spec: *spec, lanes, cursor: 0, remaining })
}
