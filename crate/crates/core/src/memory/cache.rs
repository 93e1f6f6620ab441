//! Set-associative, way-partitioned, write-back cache with true LRU.
//!
//! Each partition owns a contiguous range of ways in every set. Lookups and
//! victim selection stay inside the requested partition, so a partition can
//! only ever evict its own lines.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::redundancy::{Line, LINE_SIZE, ZERO_LINE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Data,
    Redundancy,
    Diff,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Data, Partition::Redundancy, Partition::Diff];

    const fn index(self) -> usize {
        match self {
            Partition::Data => 0,
            Partition::Redundancy => 1,
            Partition::Diff => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheLevelConfig {
    pub capacity: u64,
    pub associativity: u32,
    pub latency_cycles: u32,
    pub energy_hit_pj: u64,
    pub energy_miss_pj: u64,
    /// Scatter lines over sets with a hash of the line number instead of
    /// plain modulo indexing (sliced last-level caches do this).
    #[serde(default)]
    pub hashed_index: bool,
}

impl CacheLevelConfig {
    pub const fn l1d() -> Self {
        CacheLevelConfig {
            capacity: 32 << 10,
            associativity: 8,
            latency_cycles: 4,
            energy_hit_pj: 15,
            energy_miss_pj: 33,
            hashed_index: false,
        }
    }

    pub const fn l2() -> Self {
        CacheLevelConfig {
            capacity: 256 << 10,
            associativity: 8,
            latency_cycles: 7,
            energy_hit_pj: 46,
            energy_miss_pj: 94,
            hashed_index: false,
        }
    }

    pub const fn llc() -> Self {
        CacheLevelConfig {
            capacity: 24 << 20,
            associativity: 16,
            latency_cycles: 27,
            energy_hit_pj: 240,
            energy_miss_pj: 500,
            hashed_index: true,
        }
    }

    pub const fn controller() -> Self {
        CacheLevelConfig {
            capacity: 4 << 10,
            associativity: 4,
            latency_cycles: 1,
            energy_hit_pj: 15,
            energy_miss_pj: 33,
            hashed_index: true,
        }
    }

    pub fn sets(&self) -> u64 {
        self.capacity / (self.associativity as u64 * LINE_SIZE as u64)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.associativity == 0 {
            return Err("associativity must be at least 1");
        }
        let way_bytes = self.associativity as u64 * LINE_SIZE as u64;
        if self.capacity == 0 || !self.capacity.is_multiple_of(way_bytes) {
            return Err("capacity must be a non-zero multiple of associativity x 64 B");
        }
        if !self.hashed_index && !self.sets().is_power_of_two() {
            return Err("set count must be a power of two unless hashed_index is set");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitMiss {
    pub hits: u64,
    pub misses: u64,
}

impl HitMiss {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn add(&mut self, other: &HitMiss) {
        self.hits += other.hits;
        self.misses += other.misses;
    }

    pub fn hit_rate(&self) -> Option<f64> {
        let n = self.accesses();
        (n > 0).then(|| self.hits as f64 / n as f64)
    }
}

pub type SlotId = usize;

const INVALID: u64 = u64::MAX;

#[derive(Clone, Debug)]
pub struct Slot {
    pub addr: u64,
    pub dirty: bool,
    stamp: u64,
    /// Lanes whose private caches hold a copy (LLC data lines only).
    pub sharers: u64,
    pub data: Line,
}

impl Slot {
    const EMPTY: Slot = Slot { addr: INVALID, dirty: false, stamp: 0, sharers: 0, data: ZERO_LINE };

    pub fn is_valid(&self) -> bool {
        self.addr != INVALID
    }
}

/// Line that left the cache.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evicted {
    pub addr: u64,
    pub dirty: bool,
    pub data: Line,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheAccess {
    pub hit: bool,
    pub evicted: Option<Evicted>,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct SetAssocCache {
    sets: usize,
    ways: usize,
    hashed: bool,
    parts: [Range<usize>; 3],
    slots: Vec<Slot>,
    clock: u64,
    stats: [HitMiss; 3],
}

impl SetAssocCache {
    /// `ways[p]` gives the number of ways owned by partition `p`
    /// (data, redundancy, diff); they must sum to the associativity.
    pub fn new(config: &CacheLevelConfig, ways: [u32; 3]) -> Self {
        let assoc = config.associativity as usize;
        assert_eq!(ways.iter().map(|&w| w as usize).sum::<usize>(), assoc, "partition ways");
        let sets = config.sets() as usize;
        let d = ways[0] as usize;
        let r = ways[1] as usize;
        SetAssocCache {
            sets,
            ways: assoc,
            hashed: config.hashed_index,
            parts: [0..d, d..d + r, d + r..assoc],
            slots: vec![Slot::EMPTY; sets * assoc],
            clock: 0,
            stats: [HitMiss::default(); 3],
        }
    }

    /// Cache with every way in one partition.
    pub fn single(config: &CacheLevelConfig, part: Partition) -> Self {
        let mut ways = [0u32; 3];
        ways[part.index()] = config.associativity;
        Self::new(config, ways)
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn partition_ways(&self, part: Partition) -> usize {
        self.parts[part.index()].len()
    }

    pub fn partition_capacity_lines(&self, part: Partition) -> usize {
        self.partition_ways(part) * self.sets
    }

    fn set_of(&self, addr: u64) -> usize {
        let line = addr / LINE_SIZE as u64;
        let h = if self.hashed { mix64(line) } else { line };
        (h % self.sets as u64) as usize
    }

    fn ways_of(&self, part: Partition, addr: u64) -> Range<usize> {
        let base = self.set_of(addr) * self.ways;
        let r = &self.parts[part.index()];
        base + r.start..base + r.end
    }

    /// Locates a line without touching LRU state or statistics.
    pub fn find(&self, part: Partition, addr: u64) -> Option<SlotId> {
        self.ways_of(part, addr).find(|&i| self.slots[i].addr == addr)
    }

    /// Demand lookup: counts a hit or miss and refreshes LRU on a hit.
    pub fn lookup(&mut self, part: Partition, addr: u64) -> Option<SlotId> {
        match self.find(part, addr) {
            Some(id) => {
                self.stats[part.index()].hits += 1;
                self.touch(id);
                Some(id)
            }
            None => {
                self.stats[part.index()].misses += 1;
                None
            }
        }
    }

    /// Counts an access that completes at this level without a lookup (a
    /// write-back landing in a line known to be present).
    pub fn count_hit(&mut self, part: Partition) {
        self.stats[part.index()].hits += 1;
    }

    pub fn touch(&mut self, id: SlotId) {
        self.clock += 1;
        self.slots[id].stamp = self.clock;
    }

    /// Slot that an insertion of `addr` would use: the lowest-index invalid
    /// way, else the least recently used one. `None` if the partition has no ways.
    pub fn victim(&self, part: Partition, addr: u64) -> Option<SlotId> {
        let ways = self.ways_of(part, addr);
        if ways.is_empty() {
            return None;
        }
        if let Some(i) = ways.clone().find(|&i| !self.slots[i].is_valid()) {
            return Some(i);
        }
        ways.min_by_key(|&i| self.slots[i].stamp)
    }

    /// Removes and returns the slot's line, if any.
    pub fn take(&mut self, id: SlotId) -> Option<Evicted> {
        let s = core::mem::replace(&mut self.slots[id], Slot::EMPTY);
        s.is_valid().then_some(Evicted { addr: s.addr, dirty: s.dirty, data: s.data })
    }

    /// Places a line in an empty slot (call [`take`](Self::take) first) as MRU.
    pub fn install(&mut self, id: SlotId, addr: u64, data: Line, dirty: bool) {
        debug_assert!(!self.slots[id].is_valid());
        self.clock += 1;
        self.slots[id] = Slot { addr, dirty, stamp: self.clock, sharers: 0, data };
    }

    pub fn slot(&self, id: SlotId) -> &Slot {
        &self.slots[id]
    }

    pub fn slot_mut(&mut self, id: SlotId) -> &mut Slot {
        &mut self.slots[id]
    }

    pub fn invalidate(&mut self, part: Partition, addr: u64) -> Option<Evicted> {
        self.find(part, addr).and_then(|id| self.take(id))
    }

    /// One tag-only access: hit refreshes LRU; a miss allocates the line
    /// (marked dirty for writes) and reports what it displaced.
    pub fn access(&mut self, part: Partition, addr: u64, write: bool) -> CacheAccess {
        if let Some(id) = self.lookup(part, addr) {
            if write {
                self.slots[id].dirty = true;
            }
            return CacheAccess { hit: true, evicted: None };
        }
        let evicted = match self.victim(part, addr) {
            Some(id) => {
                let ev = self.take(id);
                self.install(id, addr, ZERO_LINE, write);
                ev
            }
            None => None,
        };
        CacheAccess { hit: false, evicted }
    }

    pub fn stats(&self, part: Partition) -> HitMiss {
        self.stats[part.index()]
    }

    pub fn total_stats(&self) -> HitMiss {
        let mut t = HitMiss::default();
        for s in &self.stats {
            t.add(s);
        }
        t
    }

    pub fn reset_stats(&mut self) {
        self.stats = [HitMiss::default(); 3];
    }

    /// Slot ids of valid lines in a partition, in slot order.
    pub fn valid_slots(&self, part: Partition) -> Vec<SlotId> {
        let r = self.parts[part.index()].clone();
        (0..self.sets)
            .flat_map(|s| {
                let base = s * self.ways;
                (base + r.start..base + r.end).filter(|&i| self.slots[i].is_valid())
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|s| !s.is_valid())
    }
}
