//! Byte-addressable NVM DIMM array with firmware-bug fault injection.
//!
//! Media is sparse: lines never written read back as the region's formatted
//! content (zeros, or checksum lines pre-filled with the CRC of a zero page).
//!
//! Faults fire at most once, on the `occurrence`-th matching access to the
//! trigger line counted from when the entry was armed. The device also keeps
//! what each line *should* hold, so callers can tell whether a read returned
//! data that the firmware corrupted.

use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::redundancy::{Line, Region, LINE_SIZE, ZERO_LINE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvmConfig {
    pub num_dimms: u32,
    pub read_latency_ns: u64,
    pub write_latency_ns: u64,
    pub energy_read_pj: u64,
    pub energy_write_pj: u64,
    pub dimm_capacity: u64,
}

impl Default for NvmConfig {
    fn default() -> Self {
        NvmConfig {
            num_dimms: 4,
            read_latency_ns: 60,
            write_latency_ns: 150,
            energy_read_pj: 1600,
            energy_write_pj: 9000,
            dimm_capacity: 256 << 20,
        }
    }
}

impl NvmConfig {
    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        if self.read_latency_ns == 0 {
            return Err(("read_latency_ns", "must be positive"));
        }
        if self.write_latency_ns == 0 {
            return Err(("write_latency_ns", "must be positive"));
        }
        if self.energy_read_pj == 0 {
            return Err(("energy_read_pj", "must be positive"));
        }
        if self.energy_write_pj == 0 {
            return Err(("energy_write_pj", "must be positive"));
        }
        if self.num_dimms < 2 {
            return Err(("num_dimms", "parity needs at least two DIMMs"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessClass {
    Data,
    Redundancy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    LostWrite,
    MisdirectedWrite,
    MisdirectedRead,
}

impl FaultKind {
    fn on_write(self) -> bool {
        !matches!(self, FaultKind::MisdirectedRead)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultScheduleEntry {
    pub kind: FaultKind,
    /// Line address whose access triggers the fault.
    pub trigger: u64,
    /// 1-based count of matching accesses to `trigger` at which it fires.
    pub occurrence: u64,
    pub misdirect_target: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NvmError {
    Unmapped(u64),
    Misaligned(u64),
    BadFault(&'static str),
}

impl fmt::Display for NvmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NvmError::Unmapped(a) => write!(f, "NVM address {a:#x} is not backed by any DIMM"),
            NvmError::Misaligned(a) => write!(f, "NVM address {a:#x} is not line-aligned"),
            NvmError::BadFault(m) => write!(f, "invalid fault entry: {m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NvmStats {
    pub data_reads: u64,
    pub data_writes: u64,
    pub redundancy_reads: u64,
    pub redundancy_writes: u64,
}

impl NvmStats {
    pub fn reads(&self) -> u64 {
        self.data_reads + self.redundancy_reads
    }

    pub fn writes(&self) -> u64 {
        self.data_writes + self.redundancy_writes
    }

    pub fn redundancy_traffic(&self) -> u64 {
        self.redundancy_reads + self.redundancy_writes
    }

    pub fn total(&self) -> u64 {
        self.reads() + self.writes()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredFault {
    pub kind: FaultKind,
    pub addr: u64,
    pub target: Option<u64>,
}

#[derive(Clone, Debug)]
struct ArmedFault {
    entry: FaultScheduleEntry,
    seen: u64,
    armed: bool,
}

#[derive(Clone, Debug)]
pub struct NvmDevice {
    capacity: u64,
    media: HashMap<u64, Line>,
    formatted: Vec<(Region, Line)>,
    faults: Vec<ArmedFault>,
    fired: Vec<FiredFault>,
    /// Intended content of lines whose media diverged because of a fault.
    intended: HashMap<u64, Line>,
    stats: NvmStats,
}

impl NvmDevice {
    pub fn new(capacity: u64) -> Self {
        NvmDevice {
            capacity,
            media: HashMap::new(),
            formatted: Vec::new(),
            faults: Vec::new(),
            fired: Vec::new(),
            intended: HashMap::new(),
            stats: NvmStats::default(),
        }
    }

    /// Declares the content never-written lines of `region` read back as.
    pub fn format_region(&mut self, region: Region, fill: Line) {
        self.formatted.push((region, fill));
    }

    fn check(&self, addr: u64) -> Result<(), NvmError> {
        if addr >= self.capacity {
            return Err(NvmError::Unmapped(addr));
        }
        if !addr.is_multiple_of(LINE_SIZE as u64) {
            return Err(NvmError::Misaligned(addr));
        }
        Ok(())
    }

    /// Media content, bypassing faults and statistics.
    pub fn peek(&self, addr: u64) -> Line {
        if let Some(l) = self.media.get(&addr) {
            return *l;
        }
        self.formatted
            .iter()
            .find(|(r, _)| r.contains(addr))
            .map_or(ZERO_LINE, |(_, l)| *l)
    }

    /// Writes media directly, bypassing faults and statistics.
    pub fn poke(&mut self, addr: u64, line: Line) {
        self.media.insert(addr, line);
        self.intended.remove(&addr);
    }

    /// What the line would hold had the firmware behaved.
    pub fn expected(&self, addr: u64) -> Line {
        self.intended.get(&addr).copied().unwrap_or_else(|| self.peek(addr))
    }

    pub fn is_tainted(&self, addr: u64) -> bool {
        self.intended.contains_key(&addr)
    }

    pub fn arm(&mut self, entry: FaultScheduleEntry) -> Result<(), NvmError> {
        self.check(entry.trigger)?;
        if entry.occurrence == 0 {
            return Err(NvmError::BadFault("occurrence is 1-based"));
        }
        match (entry.kind, entry.misdirect_target) {
            (FaultKind::LostWrite, Some(_)) => {
                return Err(NvmError::BadFault("lost writes have no misdirect target"))
            }
            (FaultKind::LostWrite, None) => {}
            (_, None) => return Err(NvmError::BadFault("misdirected faults need a target")),
            (_, Some(t)) => {
                self.check(t)?;
                if t == entry.trigger {
                    return Err(NvmError::BadFault("misdirect target equals trigger"));
                }
            }
        }
        self.faults.push(ArmedFault { entry, seen: 0, armed: true });
        Ok(())
    }

    pub fn armed_faults(&self) -> usize {
        self.faults.iter().filter(|f| f.armed).count()
    }

    pub fn fired(&self) -> &[FiredFault] {
        &self.fired
    }

    fn fire(&mut self, addr: u64, write: bool) -> Option<FaultScheduleEntry> {
        let mut hit = None;
        for f in self.faults.iter_mut().filter(|f| f.armed) {
            if f.entry.trigger == addr && f.entry.kind.on_write() == write {
                f.seen += 1;
                if f.seen == f.entry.occurrence && hit.is_none() {
                    f.armed = false;
                    hit = Some(f.entry);
                }
            }
        }
        if let Some(e) = hit {
            self.fired.push(FiredFault { kind: e.kind, addr, target: e.misdirect_target });
        }
        hit
    }

    pub fn read(&mut self, addr: u64, class: AccessClass) -> Result<Line, NvmError> {
        self.check(addr)?;
        match class {
            AccessClass::Data => self.stats.data_reads += 1,
            AccessClass::Redundancy => self.stats.redundancy_reads += 1,
        }
        if !self.faults.is_empty() {
            if let Some(e) = self.fire(addr, false) {
                return Ok(self.peek(e.misdirect_target.expect("validated at arm")));
            }
        }
        Ok(self.peek(addr))
    }

    pub fn write(&mut self, addr: u64, line: &Line, class: AccessClass) -> Result<(), NvmError> {
        self.check(addr)?;
        match class {
            AccessClass::Data => self.stats.data_writes += 1,
            AccessClass::Redundancy => self.stats.redundancy_writes += 1,
        }
        let fault = if self.faults.is_empty() { None } else { self.fire(addr, true) };
        match fault {
            None => self.poke(addr, *line),
            Some(FaultScheduleEntry { kind: FaultKind::LostWrite, .. }) => {
                self.set_intended(addr, *line);
            }
            Some(FaultScheduleEntry { misdirect_target: Some(target), .. }) => {
                let target_expected = self.expected(target);
                self.set_intended(addr, *line);
                self.media.insert(target, *line);
                self.set_intended(target, target_expected);
            }
            Some(_) => unreachable!("misdirected entries carry a target"),
        }
        Ok(())
    }

    fn set_intended(&mut self, addr: u64, line: Line) {
        if self.peek(addr) == line {
            self.intended.remove(&addr);
        } else {
            self.intended.insert(addr, line);
        }
    }

    pub fn stats(&self) -> NvmStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = NvmStats::default();
    }

    /// Lines ever written, for audits.
    pub fn written_lines(&self) -> impl Iterator<Item = u64> + '_ {
        self.media.keys().copied()
    }
}

impl core::error::Error for NvmError {}
