//! Event-driven model of the cache hierarchy, the redundancy controller that
//! sits between the LLC and NVM, and the NVM devices behind it.
//!
//! Hierarchy: each lane has a private L1 and L2 (L2 inclusive of L1); all
//! lanes share one inclusive LLC. Coherence is tracked with a sharer mask on
//! every LLC data line. All levels are write-back and write-allocate.
//!
//! The controller sees exactly two kinds of traffic: LLC fills and LLC
//! write-backs. Everything it does for redundancy hangs off those two paths,
//! plus the dirty-install hook the diff-keeping mode uses when an L2
//! write-back lands in the LLC.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::mapping::{DaxMappingTable, Mapping};
use super::{ControllerMode, CorruptionEvent, DetectionPoint, SimError};
use crate::config::MachineConfig;
use crate::memory::{
    AccessClass, AccessCounters, CostModel, HitMiss, LaneCounters, NvmDevice, Partition, SetAssocCache, SlotId,
};
use crate::redundancy::line::xor_into;
use crate::redundancy::{
    checksum_slot, checksum_word, crc32c, incremental_page_checksum, line_base, line_diff, reconstruct_line,
    set_checksum_word, ChecksumBuffer, Checksum32, Line, RedundancyLayout, Region, LINE_SIZE, ZERO_LINE,
};
use crate::workload::{AccessEvent, Op};

const LINE: u64 = LINE_SIZE as u64;
const MAX_LANES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    pub recovery_enabled: bool,
    pub object_size: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { recovery_enabled: true, object_size: 64 }
    }
}

pub struct Simulator {
    pub(super) mode: ControllerMode,
    pub(super) layout: RedundancyLayout,
    pub(super) machine: MachineConfig,
    pub(super) opts: SimOptions,
    pub(super) l1: Vec<SetAssocCache>,
    pub(super) l2: Vec<SetAssocCache>,
    pub(super) llc: SetAssocCache,
    pub(super) ctrl: SetAssocCache,
    pub(super) nvm: NvmDevice,
    pub(super) maps: DaxMappingTable,
    /// Workload lanes followed by the drain lane.
    pub(super) lanes: Vec<LaneCounters>,
    pub(super) redundancy_lookups: HitMiss,
    pub(super) events: Vec<CorruptionEvent>,
    pub(super) silent: u64,
    pub(super) ordinal: u64,
    /// Software schemes: line -> its last committed value, held by the lane
    /// whose transaction first stored to it. A line is open in at most one lane.
    pub(super) pending: Vec<BTreeMap<u64, Line>>,
    pub(super) recoveries: u64,
    pub(super) unrecoverable: u64,
    /// Last value stored by the workload per line; absent lines were never stored.
    pub(super) golden: HashMap<u64, Line>,
}

impl Simulator {
    pub fn new(
        machine: &MachineConfig,
        mode: ControllerMode,
        lanes: usize,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        if lanes == 0 || lanes > MAX_LANES {
            return Err(SimError::Config("lane count must be between 1 and 64"));
        }
        let geometry = machine.geometry().map_err(SimError::Config)?;
        let layout = RedundancyLayout::new(machine.nvm.num_dimms, machine.nvm.dimm_capacity, geometry)?;
        let p = machine.partitions;
        let llc_ways = machine
            .partitions
            .data_ways(machine.llc.associativity)
            .filter(|&d| d > 0)
            .map(|_| mode.llc_ways(machine.llc.associativity, p.redundancy_ways, p.diff_ways))
            .ok_or(SimError::Config("partition plan leaves no LLC data ways"))?;
        let mut nvm = NvmDevice::new(layout.total_bytes());
        let zero_page = vec![0u8; geometry.page_size() as usize];
        let zc = crc32c(&zero_page);
        let mut csum_fill = ZERO_LINE;
        for s in 0..geometry.checksums_per_line() as usize {
            set_checksum_word(&mut csum_fill, s, zc);
        }
        for d in 0..layout.num_dimms() {
            nvm.format_region(layout.syscsum_region(d), csum_fill);
        }
        Ok(Simulator {
            mode,
            maps: DaxMappingTable::new(&layout),
            layout,
            machine: *machine,
            opts,
            l1: (0..lanes).map(|_| SetAssocCache::single(&machine.l1, Partition::Data)).collect(),
            l2: (0..lanes).map(|_| SetAssocCache::single(&machine.l2, Partition::Data)).collect(),
            llc: SetAssocCache::new(&machine.llc, llc_ways),
            ctrl: SetAssocCache::single(&machine.controller_cache, Partition::Redundancy),
            nvm,
            lanes: vec![LaneCounters::default(); lanes + 1],
            redundancy_lookups: HitMiss::default(),
            events: Vec::new(),
            silent: 0,
            ordinal: 0,
            pending: vec![BTreeMap::new(); lanes],
            recoveries: 0,
            unrecoverable: 0,
            golden: HashMap::new(),
        })
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn layout(&self) -> &RedundancyLayout {
        &self.layout
    }

    pub fn machine(&self) -> &MachineConfig {
        &self.machine
    }

    pub fn cost_model(&self) -> CostModel {
        self.machine.cost_model()
    }

    pub fn lanes(&self) -> usize {
        self.l1.len()
    }

    /// Lane that setup and final-drain work is attributed to.
    pub fn drain_lane(&self) -> usize {
        self.l1.len()
    }

    pub fn nvm(&self) -> &NvmDevice {
        &self.nvm
    }

    /// Direct device access, for arming faults.
    pub fn nvm_mut(&mut self) -> &mut NvmDevice {
        &mut self.nvm
    }

    pub fn mappings(&self) -> &[Mapping] {
        self.maps.entries()
    }

    pub fn events(&self) -> &[CorruptionEvent] {
        &self.events
    }

    /// Reads that returned content other than what was last written to the
    /// device, without the controller flagging them.
    pub fn silent_corruptions(&self) -> u64 {
        self.silent
    }

    pub fn recoveries(&self) -> (u64, u64) {
        (self.recoveries, self.unrecoverable)
    }

    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }

    /// Last value the workload stored to a physical line.
    pub fn golden(&self, addr: u64) -> Option<Line> {
        self.golden.get(&addr).copied()
    }

    pub fn golden_lines(&self) -> impl Iterator<Item = (u64, Line)> + '_ {
        self.golden.iter().map(|(a, l)| (*a, *l))
    }

    pub fn counters(&self) -> AccessCounters {
        let n = self.lanes();
        let mut c = AccessCounters::new(n);
        for cache in &self.l1 {
            c.l1.add(&cache.stats(Partition::Data));
        }
        for cache in &self.l2 {
            c.l2.add(&cache.stats(Partition::Data));
        }
        c.llc_data = self.llc.stats(Partition::Data);
        c.llc_redundancy = self.llc.stats(Partition::Redundancy);
        c.llc_diff = self.llc.stats(Partition::Diff);
        c.controller = self.ctrl.stats(Partition::Redundancy);
        c.redundancy_lookups = self.redundancy_lookups;
        c.nvm = self.nvm.stats();
        c.lanes.copy_from_slice(&self.lanes[..n]);
        c.drain = self.lanes[n];
        c
    }

    pub fn reset_counters(&mut self) {
        for c in self.l1.iter_mut().chain(self.l2.iter_mut()) {
            c.reset_stats();
        }
        self.llc.reset_stats();
        self.ctrl.reset_stats();
        self.nvm.reset_stats();
        self.lanes.iter_mut().for_each(|l| *l = LaneCounters::default());
        self.redundancy_lookups = HitMiss::default();
    }

    // ---------------------------------------------------------------- lookup helpers

    pub(super) fn mapping_of(&self, addr: u64) -> Option<&Mapping> {
        if self.maps.is_empty() {
            return None;
        }
        let logical = self.layout.logical_of(addr).ok()?;
        self.maps.find(logical)
    }

    fn is_mapped(&self, addr: u64) -> bool {
        self.mapping_of(addr).is_some()
    }

    fn class_of(&self, addr: u64) -> AccessClass {
        if self.layout.is_data(addr) {
            AccessClass::Data
        } else {
            AccessClass::Redundancy
        }
    }

    fn dax_entry(&self, addr: u64) -> Result<u64, SimError> {
        let buf = self
            .mapping_of(addr)
            .and_then(|m| m.dax_cl)
            .ok_or(SimError::Invariant("mapped line without a line-checksum buffer"))?;
        Ok(buf.entry_addr(addr, &self.layout)?)
    }

    pub(super) fn compute(&mut self, lane: usize, ops: u64) {
        self.lanes[lane].compute_cycles += ops * self.machine.checksum_cycles;
    }

    pub(super) fn nvm_read(&mut self, lane: usize, addr: u64, class: AccessClass) -> Result<Line, SimError> {
        self.lanes[lane].nvm_reads += 1;
        Ok(self.nvm.read(addr, class)?)
    }

    pub(super) fn nvm_write(&mut self, lane: usize, addr: u64, line: &Line, class: AccessClass) -> Result<(), SimError> {
        self.lanes[lane].nvm_writes += 1;
        Ok(self.nvm.write(addr, line, class)?)
    }

    // ---------------------------------------------------------------- workload interface

    /// Translates and performs one workload event.
    pub fn apply(&mut self, ev: &AccessEvent) -> Result<(), SimError> {
        self.ordinal += 1;
        let lane = ev.lane as usize;
        let addr = self.layout.translate(ev.addr)?;
        match ev.op {
            Op::Load => self.access(lane, addr, None)?,
            Op::Store => self.access(lane, addr, Some(&ev.payload))?,
        };
        if ev.txn_boundary && self.mode.software() {
            self.commit(lane)?;
        }
        Ok(())
    }

    pub fn load(&mut self, lane: usize, addr: u64) -> Result<Line, SimError> {
        self.access(lane, addr, None)
    }

    /// Stores a full line; returns the value it replaced.
    pub fn store(&mut self, lane: usize, addr: u64, data: &Line) -> Result<Line, SimError> {
        self.access(lane, addr, Some(data))
    }

    pub(super) fn access(&mut self, lane: usize, addr: u64, write: Option<&Line>) -> Result<Line, SimError> {
        if lane >= self.lanes() {
            return Err(SimError::BadLane(lane));
        }
        if !addr.is_multiple_of(LINE) {
            return Err(SimError::Unaligned(addr));
        }
        self.layout.dimm_of(addr)?;
        let id = match self.l1[lane].lookup(Partition::Data, addr) {
            Some(id) => {
                self.lanes[lane].l1_hits += 1;
                id
            }
            None => {
                let data = match self.l2[lane].lookup(Partition::Data, addr) {
                    Some(j) => {
                        self.lanes[lane].l2_hits += 1;
                        self.l2[lane].slot(j).data
                    }
                    None => {
                        let d = self.llc_read(lane, addr)?;
                        self.l2_install(lane, addr, d)?;
                        let k = self.llc_slot(addr)?;
                        self.llc.slot_mut(k).sharers |= 1 << lane;
                        d
                    }
                };
                self.l1_install(lane, addr, data)?
            }
        };
        let old = self.l1[lane].slot(id).data;
        if let Some(new) = write {
            self.invalidate_others(lane, addr)?;
            let s = self.l1[lane].slot_mut(id);
            s.data = *new;
            s.dirty = true;
            self.golden.insert(addr, *new);
            // A line already open in another lane's transaction stays there;
            // that commit brings parity from the committed value to the
            // current one, covering this store too.
            if self.mode.software() && self.is_mapped(addr) && !self.pending.iter().any(|p| p.contains_key(&addr)) {
                self.pending[lane].insert(addr, old);
            }
        }
        Ok(old)
    }

    fn llc_slot(&self, addr: u64) -> Result<SlotId, SimError> {
        self.llc.find(Partition::Data, addr).ok_or(SimError::Invariant("upper-level line missing from the LLC"))
    }

    fn l1_install(&mut self, lane: usize, addr: u64, data: Line) -> Result<SlotId, SimError> {
        let v = self.l1[lane].victim(Partition::Data, addr).ok_or(SimError::Invariant("L1 has no ways"))?;
        if let Some(ev) = self.l1[lane].take(v) {
            if ev.dirty {
                let j = self.l2[lane]
                    .find(Partition::Data, ev.addr)
                    .ok_or(SimError::Invariant("L1 line missing from L2"))?;
                self.l2[lane].count_hit(Partition::Data);
                let s = self.l2[lane].slot_mut(j);
                s.data = ev.data;
                s.dirty = true;
            }
        }
        self.l1[lane].install(v, addr, data, false);
        Ok(v)
    }

    fn l2_install(&mut self, lane: usize, addr: u64, data: Line) -> Result<(), SimError> {
        let v = self.l2[lane].victim(Partition::Data, addr).ok_or(SimError::Invariant("L2 has no ways"))?;
        if let Some(mut ev) = self.l2[lane].take(v) {
            if let Some(e1) = self.l1[lane].invalidate(Partition::Data, ev.addr) {
                if e1.dirty {
                    ev.data = e1.data;
                    ev.dirty = true;
                }
            }
            let k = self.llc_slot(ev.addr)?;
            self.llc.slot_mut(k).sharers &= !(1 << lane);
            if ev.dirty {
                self.dirty_install(lane, ev.addr, &ev.data)?;
            }
        }
        self.l2[lane].install(v, addr, data, false);
        Ok(())
    }

    /// Pushes lane `j`'s copy of `addr` down to the LLC. Invalidating drops
    /// the copies; otherwise they stay, clean.
    fn flush_private(&mut self, lane: usize, j: usize, addr: u64, invalidate: bool) -> Result<(), SimError> {
        let mut newest = None;
        if let Some(i) = self.l1[j].find(Partition::Data, addr) {
            let s = self.l1[j].slot_mut(i);
            if s.dirty {
                newest = Some(s.data);
                s.dirty = false;
            }
            if invalidate {
                self.l1[j].take(i);
            }
        }
        if let Some(i) = self.l2[j].find(Partition::Data, addr) {
            let s = self.l2[j].slot_mut(i);
            if newest.is_none() && s.dirty {
                newest = Some(s.data);
            }
            if let Some(n) = newest {
                s.data = n;
            }
            s.dirty = false;
            if invalidate {
                self.l2[j].take(i);
            }
        }
        if invalidate {
            if let Some(k) = self.llc.find(Partition::Data, addr) {
                self.llc.slot_mut(k).sharers &= !(1 << j);
            }
        }
        if let Some(n) = newest {
            self.dirty_install(lane, addr, &n)?;
        }
        Ok(())
    }

    fn invalidate_others(&mut self, lane: usize, addr: u64) -> Result<(), SimError> {
        let k = self.llc_slot(addr)?;
        let others = self.llc.slot(k).sharers & !(1 << lane);
        for j in bits(others) {
            self.flush_private(lane, j, addr, true)?;
        }
        Ok(())
    }

    /// LLC demand read after an L2 miss, including the fill on an LLC miss.
    fn llc_read(&mut self, lane: usize, addr: u64) -> Result<Line, SimError> {
        if let Some(k) = self.llc.find(Partition::Data, addr) {
            let others = self.llc.slot(k).sharers & !(1 << lane);
            for j in bits(others) {
                self.flush_private(lane, j, addr, false)?;
            }
        }
        if let Some(k) = self.llc.lookup(Partition::Data, addr) {
            self.lanes[lane].llc_accesses += 1;
            return Ok(self.llc.slot(k).data);
        }
        let data = self.fill(lane, addr)?;
        let v = self.llc.victim(Partition::Data, addr).ok_or(SimError::Invariant("LLC has no data ways"))?;
        if self.llc.slot(v).is_valid() {
            self.evict_llc(lane, v)?;
        }
        self.llc.install(v, addr, data, false);
        Ok(data)
    }

    fn evict_llc(&mut self, lane: usize, v: SlotId) -> Result<(), SimError> {
        let addr = self.llc.slot(v).addr;
        for j in bits(self.llc.slot(v).sharers) {
            self.flush_private(lane, j, addr, true)?;
        }
        let ev = self.llc.take(v).ok_or(SimError::Invariant("evicting an empty LLC slot"))?;
        if ev.dirty {
            let diff = self.take_diff(lane, ev.addr)?;
            self.writeback(lane, ev.addr, &ev.data, diff)?;
        }
        Ok(())
    }

    /// An L2 write-back landing in the LLC. With diffs enabled the old LLC
    /// value yields the diff, folded into the diff partition.
    pub(super) fn dirty_install(&mut self, lane: usize, addr: u64, new: &Line) -> Result<(), SimError> {
        let k = self.llc_slot(addr)?;
        self.llc.count_hit(Partition::Data);
        if self.mode.keeps_diffs() && self.is_mapped(addr) {
            let d = line_diff(&self.llc.slot(k).data, new);
            self.fold_diff(lane, addr, d)?;
        }
        let k = self.llc_slot(addr)?;
        let s = self.llc.slot_mut(k);
        s.data = *new;
        s.dirty = true;
        Ok(())
    }

    fn fold_diff(&mut self, lane: usize, addr: u64, d: Line) -> Result<(), SimError> {
        if let Some(i) = self.llc.lookup(Partition::Diff, addr) {
            xor_into(&mut self.llc.slot_mut(i).data, &d);
            return Ok(());
        }
        let v = self.llc.victim(Partition::Diff, addr).ok_or(SimError::Invariant("no diff ways"))?;
        if let Some(ev) = self.llc.take(v) {
            self.diff_eviction(lane, ev.addr, &ev.data)?;
        }
        self.llc.install(v, addr, d, false);
        Ok(())
    }

    /// Writes the victim back using its diff and keeps it in the LLC, clean.
    fn diff_eviction(&mut self, lane: usize, victim: u64, diff: &Line) -> Result<(), SimError> {
        let k = self.llc_slot(victim)?;
        if !self.llc.slot(k).dirty {
            return Err(SimError::Invariant("diff held for a clean line"));
        }
        let data = self.llc.slot(k).data;
        self.writeback(lane, victim, &data, Some(*diff))?;
        let k = self.llc_slot(victim)?;
        self.llc.slot_mut(k).dirty = false;
        Ok(())
    }

    fn take_diff(&mut self, lane: usize, addr: u64) -> Result<Option<Line>, SimError> {
        if !self.mode.keeps_diffs() || !self.is_mapped(addr) {
            return Ok(None);
        }
        self.lanes[lane].llc_accesses += 1;
        match self.llc.lookup(Partition::Diff, addr) {
            Some(k) => Ok(self.llc.take(k).map(|e| e.data)),
            None => Err(SimError::Invariant("dirty mapped line has no diff")),
        }
    }

    // ---------------------------------------------------------------- fills

    fn fill(&mut self, lane: usize, addr: u64) -> Result<Line, SimError> {
        if self.mode.verifies() && self.is_mapped(addr) {
            return self.verified_fill(lane, addr);
        }
        let data = self.nvm_read(lane, addr, self.class_of(addr))?;
        self.note_delivery(addr, &data, false);
        Ok(data)
    }

    fn note_delivery(&mut self, addr: u64, data: &Line, detected: bool) {
        if !detected && *data != self.nvm.expected(addr) {
            self.silent += 1;
        }
    }

    fn verified_fill(&mut self, lane: usize, addr: u64) -> Result<Line, SimError> {
        self.lanes[lane].compute_cycles += self.machine.range_match_cycles;
        let page = self.layout.page_base(addr);
        let mut event: Option<usize> = None;
        let mut retried = false;
        loop {
            let (data, stored, computed) = self.read_checked(lane, addr)?;
            self.compute(lane, 1);
            if stored == computed {
                if let Some(i) = event {
                    self.events[i].recovered = true;
                }
                self.note_delivery(addr, &data, event.is_some());
                return Ok(data);
            }
            if event.is_none() {
                event = Some(self.raise(addr, page, stored, computed, DetectionPoint::Fill));
            }
            if retried || !self.opts.recovery_enabled || !self.recover(lane, page)? {
                return Ok(data);
            }
            retried = true;
        }
    }

    /// Reads a line along with the checksum guarding it: the page checksum
    /// over all page lines in Naive, the line checksum otherwise.
    fn read_checked(&mut self, lane: usize, addr: u64) -> Result<(Line, Checksum32, Checksum32), SimError> {
        if self.mode == ControllerMode::Naive {
            let page = self.layout.page_base(addr);
            let lpp = self.layout.geometry().lines_per_page();
            let mut buf = vec![0u8; self.layout.geometry().page_size() as usize];
            let mut data = ZERO_LINE;
            for i in 0..lpp {
                let la = page + i * LINE;
                let class = if la == addr { AccessClass::Data } else { AccessClass::Redundancy };
                let l = self.nvm_read(lane, la, class)?;
                buf[(i * LINE) as usize..((i + 1) * LINE) as usize].copy_from_slice(&l);
                if la == addr {
                    data = l;
                }
            }
            let ca = self.layout.system_checksum_addr(page)?;
            let cl = self.nvm_read(lane, line_base(ca), AccessClass::Redundancy)?;
            Ok((data, checksum_word(&cl, checksum_slot(ca)), crc32c(&buf)))
        } else {
            let ea = self.dax_entry(addr)?;
            let cl = self.red_read(lane, line_base(ea))?;
            let data = self.nvm_read(lane, addr, AccessClass::Data)?;
            Ok((data, checksum_word(&cl, checksum_slot(ea)), crc32c(&data)))
        }
    }

    fn raise(&mut self, addr: u64, page: u64, expected: Checksum32, computed: Checksum32, point: DetectionPoint) -> usize {
        self.events.push(CorruptionEvent {
            detected_at: self.ordinal,
            line_addr: addr,
            page_addr: page,
            expected,
            computed,
            point,
            recovered: false,
        });
        self.events.len() - 1
    }

    // ---------------------------------------------------------------- redundancy lines

    /// Controller-cache slot holding redundancy line `line`, fetched from the
    /// LLC redundancy partition or NVM on a miss. The two caches are
    /// exclusive: a line moves up on a hit and spills down on eviction.
    fn red_slot(&mut self, lane: usize, line: u64) -> Result<SlotId, SimError> {
        self.lanes[lane].controller_accesses += 1;
        if let Some(id) = self.ctrl.lookup(Partition::Redundancy, line) {
            self.redundancy_lookups.hits += 1;
            return Ok(id);
        }
        let mut found = None;
        if self.llc.partition_ways(Partition::Redundancy) > 0 {
            self.lanes[lane].llc_accesses += 1;
            if let Some(k) = self.llc.lookup(Partition::Redundancy, line) {
                found = self.llc.take(k).map(|e| (e.data, e.dirty));
            }
        }
        let (data, dirty) = match found {
            Some(x) => {
                self.redundancy_lookups.hits += 1;
                x
            }
            None => {
                self.redundancy_lookups.misses += 1;
                (self.nvm_read(lane, line, AccessClass::Redundancy)?, false)
            }
        };
        let v = self
            .ctrl
            .victim(Partition::Redundancy, line)
            .ok_or(SimError::Invariant("controller cache has no ways"))?;
        if let Some(ev) = self.ctrl.take(v) {
            self.spill(lane, ev.addr, ev.data, ev.dirty)?;
        }
        self.ctrl.install(v, line, data, dirty);
        Ok(v)
    }

    fn spill(&mut self, lane: usize, addr: u64, data: Line, dirty: bool) -> Result<(), SimError> {
        let Some(v) = self.llc.victim(Partition::Redundancy, addr) else {
            if dirty {
                self.nvm_write(lane, addr, &data, AccessClass::Redundancy)?;
            }
            return Ok(());
        };
        self.llc.count_hit(Partition::Redundancy);
        if let Some(old) = self.llc.take(v) {
            if old.dirty {
                self.nvm_write(lane, old.addr, &old.data, AccessClass::Redundancy)?;
            }
        }
        self.llc.install(v, addr, data, dirty);
        Ok(())
    }

    fn red_read(&mut self, lane: usize, line: u64) -> Result<Line, SimError> {
        if self.mode.caches_redundancy() {
            let id = self.red_slot(lane, line)?;
            Ok(self.ctrl.slot(id).data)
        } else {
            self.nvm_read(lane, line, AccessClass::Redundancy)
        }
    }

    fn red_write(&mut self, lane: usize, line: u64, data: &Line) -> Result<(), SimError> {
        if self.mode.caches_redundancy() {
            let id = self.red_slot(lane, line)?;
            let s = self.ctrl.slot_mut(id);
            s.data = *data;
            s.dirty = true;
            Ok(())
        } else {
            self.nvm_write(lane, line, data, AccessClass::Redundancy)
        }
    }

    fn red_update(&mut self, lane: usize, line: u64, f: impl FnOnce(&mut Line)) -> Result<(), SimError> {
        if self.mode.caches_redundancy() {
            let id = self.red_slot(lane, line)?;
            let s = self.ctrl.slot_mut(id);
            f(&mut s.data);
            s.dirty = true;
            Ok(())
        } else {
            let mut l = self.nvm_read(lane, line, AccessClass::Redundancy)?;
            f(&mut l);
            self.nvm_write(lane, line, &l, AccessClass::Redundancy)
        }
    }

    /// Writes every cached redundancy line back to NVM and empties both caches.
    fn flush_redundancy(&mut self, lane: usize) -> Result<(), SimError> {
        for id in self.ctrl.valid_slots(Partition::Redundancy) {
            if let Some(e) = self.ctrl.take(id) {
                if e.dirty {
                    self.nvm_write(lane, e.addr, &e.data, AccessClass::Redundancy)?;
                }
            }
        }
        for id in self.llc.valid_slots(Partition::Redundancy) {
            if let Some(e) = self.llc.take(id) {
                if e.dirty {
                    self.nvm_write(lane, e.addr, &e.data, AccessClass::Redundancy)?;
                }
            }
        }
        Ok(())
    }

    // ---------------------------------------------------------------- write-backs

    fn writeback(&mut self, lane: usize, addr: u64, data: &Line, diff: Option<Line>) -> Result<(), SimError> {
        if self.mode.verifies() && self.is_mapped(addr) {
            self.redundant_writeback(lane, addr, data, diff)
        } else {
            self.nvm_write(lane, addr, data, self.class_of(addr))
        }
    }

    fn redundant_writeback(&mut self, lane: usize, addr: u64, data: &Line, diff: Option<Line>) -> Result<(), SimError> {
        self.lanes[lane].compute_cycles += self.machine.range_match_cycles;
        let page = self.layout.page_base(addr);
        let diff = match diff {
            Some(d) => {
                let ea = self.dax_entry(addr)?;
                let v = crc32c(data);
                self.red_update(lane, line_base(ea), |l| set_checksum_word(l, checksum_slot(ea), v))?;
                self.compute(lane, 1);
                d
            }
            None => {
                let old = self.old_data(lane, addr, data)?;
                line_diff(&old, data)
            }
        };
        let ca = self.layout.system_checksum_addr(page)?;
        let offset = addr - page;
        let geom = *self.layout.geometry();
        self.red_update(lane, line_base(ca), |l| {
            let s = checksum_slot(ca);
            let c = incremental_page_checksum(checksum_word(l, s), &diff, offset, &geom);
            set_checksum_word(l, s, c);
        })?;
        let (_, pa) = self.layout.parity_addr(addr)?;
        self.red_update(lane, pa, |l| xor_into(l, &diff))?;
        self.compute(lane, 2);
        self.nvm_write(lane, addr, data, AccessClass::Data)
    }

    /// Old media content of a line about to be overwritten. With line
    /// checksums it is verified first, and the line checksum is moved to the
    /// new value in the same read-modify-write.
    fn old_data(&mut self, lane: usize, addr: u64, data: &Line) -> Result<Line, SimError> {
        if !self.mode.line_checksums() {
            return self.nvm_read(lane, addr, AccessClass::Redundancy);
        }
        let page = self.layout.page_base(addr);
        let ea = self.dax_entry(addr)?;
        let slot = checksum_slot(ea);
        let mut event: Option<usize> = None;
        let mut retried = false;
        let (old, mut cl) = loop {
            let old = self.nvm_read(lane, addr, AccessClass::Redundancy)?;
            let cl = self.red_read(lane, line_base(ea))?;
            self.compute(lane, 1);
            let (stored, computed) = (checksum_word(&cl, slot), crc32c(&old));
            if stored == computed {
                if let Some(i) = event {
                    self.events[i].recovered = true;
                }
                break (old, cl);
            }
            if event.is_none() {
                event = Some(self.raise(addr, page, stored, computed, DetectionPoint::Writeback));
            }
            if retried || !self.opts.recovery_enabled || !self.recover(lane, page)? {
                break (old, cl);
            }
            retried = true;
        };
        set_checksum_word(&mut cl, slot, crc32c(data));
        self.compute(lane, 1);
        self.red_write(lane, line_base(ea), &cl)?;
        Ok(old)
    }

    // ---------------------------------------------------------------- recovery

    /// Rebuilds `page_addr` from the other members of its stripe. Returns
    /// false, leaving media untouched, if a survivor or the rebuilt page
    /// fails its page checksum.
    pub fn recover_page(&mut self, page_addr: u64) -> Result<bool, SimError> {
        let lane = self.drain_lane();
        self.recover(lane, self.layout.page_base(page_addr))
    }

    fn recover(&mut self, lane: usize, page: u64) -> Result<bool, SimError> {
        self.recoveries += 1;
        let ok = self.rebuild(lane, page)?;
        if !ok {
            self.unrecoverable += 1;
        }
        Ok(ok)
    }

    fn page_checksum_from_nvm(&mut self, lane: usize, page: u64) -> Result<Checksum32, SimError> {
        let ca = self.layout.system_checksum_addr(page)?;
        let cl = self.nvm_read(lane, line_base(ca), AccessClass::Redundancy)?;
        Ok(checksum_word(&cl, checksum_slot(ca)))
    }

    fn rebuild(&mut self, lane: usize, page: u64) -> Result<bool, SimError> {
        if self.mode.caches_redundancy() {
            self.flush_redundancy(lane)?;
        }
        let stripe = self.layout.stripe_of(page)?;
        let lpp = self.layout.geometry().lines_per_page();
        let members: Vec<(u64, bool)> =
            self.layout.stripe_members(stripe).map(|(_, a, p)| (a, p)).filter(|(a, _)| *a != page).collect();
        let mut survivors: Vec<Vec<Line>> = vec![Vec::with_capacity(members.len()); lpp as usize];
        let mut buf = vec![0u8; self.layout.geometry().page_size() as usize];
        for (m, is_parity) in members {
            for i in 0..lpp {
                let l = self.nvm_read(lane, m + i * LINE, AccessClass::Redundancy)?;
                buf[(i * LINE) as usize..((i + 1) * LINE) as usize].copy_from_slice(&l);
                survivors[i as usize].push(l);
            }
            self.compute(lane, 1);
            if !is_parity && crc32c(&buf) != self.page_checksum_from_nvm(lane, m)? {
                return Ok(false);
            }
        }
        let width = self.layout.num_dimms() as usize;
        let mut rebuilt = Vec::with_capacity(lpp as usize);
        for (i, s) in survivors.iter().enumerate() {
            let l = reconstruct_line(s, width).map_err(|_| SimError::Invariant("stripe member count"))?;
            buf[i * LINE_SIZE..(i + 1) * LINE_SIZE].copy_from_slice(&l);
            rebuilt.push(l);
        }
        self.compute(lane, 1);
        if crc32c(&buf) != self.page_checksum_from_nvm(lane, page)? {
            return Ok(false);
        }
        for (i, l) in rebuilt.iter().enumerate() {
            self.nvm_write(lane, page + i as u64 * LINE, l, AccessClass::Redundancy)?;
        }
        if self.mode.line_checksums() && self.is_mapped(page) {
            let first = self.dax_entry(page)?;
            let per_line = self.layout.geometry().checksums_per_line() as usize;
            for (c, chunk) in rebuilt.chunks(per_line).enumerate() {
                let mut cl = ZERO_LINE;
                for (s, l) in chunk.iter().enumerate() {
                    set_checksum_word(&mut cl, s, crc32c(l));
                }
                self.nvm_write(lane, first + (c * LINE_SIZE) as u64, &cl, AccessClass::Redundancy)?;
            }
        }
        Ok(true)
    }

    // ---------------------------------------------------------------- draining

    /// Writes every dirty line and all cached redundancy back to NVM and
    /// empties every cache. Work is charged to `lane`.
    pub fn flush_all_as(&mut self, lane: usize) -> Result<(), SimError> {
        for j in 0..self.lanes() {
            for id in self.l2[j].valid_slots(Partition::Data) {
                let addr = self.l2[j].slot(id).addr;
                self.flush_private(lane, j, addr, true)?;
            }
        }
        for id in self.llc.valid_slots(Partition::Data) {
            if let Some(ev) = self.llc.take(id) {
                if ev.dirty {
                    let diff = self.take_diff(lane, ev.addr)?;
                    self.writeback(lane, ev.addr, &ev.data, diff)?;
                }
            }
        }
        if !self.llc.valid_slots(Partition::Diff).is_empty() {
            return Err(SimError::Invariant("diffs left after draining the LLC"));
        }
        self.flush_redundancy(lane)
    }

    /// Writes one line back to NVM if dirty anywhere, keeping clean copies
    /// cached.
    pub fn clean_line(&mut self, lane: usize, addr: u64) -> Result<(), SimError> {
        for j in 0..self.lanes() {
            self.flush_private(lane, j, addr, false)?;
        }
        let Some(k) = self.llc.find(Partition::Data, addr) else { return Ok(()) };
        if !self.llc.slot(k).dirty {
            return Ok(());
        }
        let data = self.llc.slot(k).data;
        let diff = self.take_diff(lane, addr)?;
        self.writeback(lane, addr, &data, diff)?;
        let k = self.llc_slot(addr)?;
        self.llc.slot_mut(k).dirty = false;
        Ok(())
    }

    pub fn flush_all(&mut self) -> Result<(), SimError> {
        self.flush_all_as(self.drain_lane())
    }

    /// Closes every open software transaction, then drains.
    pub fn finish(&mut self) -> Result<(), SimError> {
        if self.mode.software() {
            for lane in 0..self.lanes() {
                self.commit(lane)?;
            }
        }
        self.flush_all()
    }

    // ---------------------------------------------------------------- mapping

    /// DAX-maps a logical, page-aligned range. Line checksums (and object
    /// checksums for the object scheme) are computed from media.
    pub fn map_file(&mut self, range: Region) -> Result<(), SimError> {
        let page = self.layout.geometry().page_size();
        if !range.base.is_multiple_of(page) || !range.len.is_multiple_of(page) || range.len == 0 {
            return Err(SimError::Unaligned(range.base));
        }
        if range.end() > self.layout.data_bytes() {
            return Err(SimError::Layout(crate::redundancy::LayoutError::OutOfRange(range.end())));
        }
        if self.maps.overlaps(range) {
            return Err(SimError::Overlap(range.base));
        }
        // Buffers are built from media, so media must be current.
        let lane = self.drain_lane();
        self.flush_all_as(lane)?;
        let dax_cl = if self.mode.line_checksums() { Some(self.build_buffer(lane, range, LINE)?) } else { None };
        let objects = if self.mode == ControllerMode::TxbObject {
            Some(self.build_buffer(lane, range, self.opts.object_size)?)
        } else {
            None
        };
        self.maps.insert(Mapping { range, dax_cl, objects })
    }

    fn build_buffer(&mut self, lane: usize, range: Region, granule: u64) -> Result<ChecksumBuffer, SimError> {
        let entries = range.len / granule;
        let base = self.maps.alloc(entries * 4)?;
        let buf = ChecksumBuffer { base, covered: range, granule };
        let per_line = self.layout.geometry().checksums_per_line();
        let mut obj = Vec::with_capacity(granule as usize);
        let mut cl = ZERO_LINE;
        for e in 0..entries {
            obj.clear();
            for k in 0..granule / LINE {
                let pa = self.layout.translate(range.base + e * granule + k * LINE)?;
                obj.extend_from_slice(&self.nvm_read(lane, pa, AccessClass::Redundancy)?);
            }
            set_checksum_word(&mut cl, (e % per_line) as usize, crc32c(&obj));
            if e % per_line == per_line - 1 || e == entries - 1 {
                self.nvm_write(lane, base + (e / per_line) * LINE, &cl, AccessClass::Redundancy)?;
                cl = ZERO_LINE;
            }
        }
        self.compute(lane, entries);
        Ok(buf)
    }

    /// Drains, then drops the mapping and frees its buffers.
    pub fn unmap_file(&mut self, range: Region) -> Result<(), SimError> {
        if !self.maps.entries().iter().any(|m| m.range == range) {
            return Err(SimError::NotMapped(range.base));
        }
        if self.mode.software() {
            for lane in 0..self.lanes() {
                self.commit(lane)?;
            }
        }
        self.flush_all()?;
        let m = self.maps.remove(range)?;
        for b in [m.dax_cl, m.objects].into_iter().flatten() {
            self.maps.free(b.base, b.size_bytes(), &self.layout);
        }
        Ok(())
    }

    // ---------------------------------------------------------------- test support

    /// Sets a data line's media content with all redundancy made consistent,
    /// bypassing counters. The line must not be cached.
    pub fn preload(&mut self, addr: u64, line: Line) -> Result<(), SimError> {
        if self.llc.find(Partition::Data, addr).is_some() {
            return Err(SimError::Invariant("preload of a cached line"));
        }
        let page = self.layout.page_base(addr);
        let ca = self.layout.system_checksum_addr(page)?;
        let (_, pa) = self.layout.parity_addr(addr)?;
        let old = self.nvm.peek(addr);
        self.nvm.poke(addr, line);
        self.golden.insert(addr, line);
        let mut parity = self.nvm.peek(pa);
        xor_into(&mut parity, &line_diff(&old, &line));
        self.nvm.poke(pa, parity);
        let lpp = self.layout.geometry().lines_per_page();
        let mut buf = Vec::with_capacity(self.layout.geometry().page_size() as usize);
        for i in 0..lpp {
            buf.extend_from_slice(&self.nvm.peek(page + i * LINE));
        }
        let mut cl = self.nvm.peek(line_base(ca));
        set_checksum_word(&mut cl, checksum_slot(ca), crc32c(&buf));
        self.nvm.poke(line_base(ca), cl);
        if let Some(m) = self.mapping_of(addr).cloned() {
            if let Some(b) = m.dax_cl {
                let ea = b.entry_addr(addr, &self.layout)?;
                let mut cl = self.nvm.peek(line_base(ea));
                set_checksum_word(&mut cl, checksum_slot(ea), crc32c(&line));
                self.nvm.poke(line_base(ea), cl);
            }
            if let Some(b) = m.objects {
                let logical = self.layout.logical_of(addr)?;
                let obj = logical - (logical - b.covered.base) % b.granule;
                let mut bytes = Vec::new();
                for k in 0..b.granule / LINE {
                    bytes.extend_from_slice(&self.nvm.peek(self.layout.translate(obj + k * LINE)?));
                }
                let ea = b.entry_addr_logical(obj)?;
                let mut cl = self.nvm.peek(line_base(ea));
                set_checksum_word(&mut cl, checksum_slot(ea), crc32c(&bytes));
                self.nvm.poke(line_base(ea), cl);
            }
        }
        Ok(())
    }

    /// Newest value of a line anywhere in the hierarchy, else media.
    pub fn current(&self, addr: u64) -> Line {
        for j in 0..self.lanes() {
            if let Some(i) = self.l1[j].find(Partition::Data, addr) {
                if self.l1[j].slot(i).dirty {
                    return self.l1[j].slot(i).data;
                }
            }
            if let Some(i) = self.l2[j].find(Partition::Data, addr) {
                if self.l2[j].slot(i).dirty {
                    return self.l2[j].slot(i).data;
                }
            }
        }
        match self.llc.find(Partition::Data, addr) {
            Some(k) => self.llc.slot(k).data,
            None => self.nvm.peek(addr),
        }
    }

    pub fn llc_holds(&self, addr: u64) -> Option<bool> {
        self.llc.find(Partition::Data, addr).map(|k| self.llc.slot(k).dirty)
    }

    pub fn diff_of(&self, addr: u64) -> Option<Line> {
        self.llc.find(Partition::Diff, addr).map(|k| self.llc.slot(k).data)
    }

    /// Structural invariants of the hierarchy; cheap enough to call after
    /// every event in small configurations.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        for j in 0..self.lanes() {
            for id in self.l1[j].valid_slots(Partition::Data) {
                if self.l2[j].find(Partition::Data, self.l1[j].slot(id).addr).is_none() {
                    return Err("L1 line missing from L2");
                }
            }
            for id in self.l2[j].valid_slots(Partition::Data) {
                let k = self.llc.find(Partition::Data, self.l2[j].slot(id).addr).ok_or("L2 line missing from LLC")?;
                if self.llc.slot(k).sharers & (1 << j) == 0 {
                    return Err("sharer mask misses an L2 copy");
                }
            }
        }
        for k in self.llc.valid_slots(Partition::Data) {
            let s = self.llc.slot(k);
            for j in bits(s.sharers) {
                if self.l2[j].find(Partition::Data, s.addr).is_none() {
                    return Err("sharer mask names a lane without a copy");
                }
            }
            if !self.mode.software() && !self.layout.is_data(s.addr) {
                return Err("LLC data partition holds a redundancy line");
            }
        }
        for k in self.llc.valid_slots(Partition::Diff) {
            let a = self.llc.slot(k).addr;
            match self.llc.find(Partition::Data, a) {
                Some(d) if self.llc.slot(d).dirty => {}
                _ => return Err("diff without a dirty LLC line"),
            }
        }
        for k in self.ctrl.valid_slots(Partition::Redundancy) {
            let a = self.ctrl.slot(k).addr;
            if self.layout.is_data(a) {
                return Err("controller cache holds a data line");
            }
            if self.llc.find(Partition::Redundancy, a).is_some() {
                return Err("line in both controller cache and LLC redundancy partition");
            }
        }
        for k in self.llc.valid_slots(Partition::Redundancy) {
            if self.layout.is_data(self.llc.slot(k).addr) {
                return Err("LLC redundancy partition holds a data line");
            }
        }
        Ok(())
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    core::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let b = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(b)
    })
}
